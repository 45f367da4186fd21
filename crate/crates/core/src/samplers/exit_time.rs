use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::schedule::Schedule;

/// Draws the first jump time after `t_start` of a process with frozen
/// posterior mass `lambda`, whose survival is
/// `P(T > t) = ((1 − κ_t)/(1 − κ_{t_start}))^λ`.
///
/// With `e ~ Exp(λ)` the time is `κ⁻¹((1 − κ_start)(1 − e^{−e}) + κ_start)`.
/// Returns `+∞` when `λ = 0` or when the draw lands at `κ = 1`.
pub fn sample_exit_time<R: Rng + ?Sized>(
    lambda: f64,
    t_start: f64,
    schedule: &dyn Schedule,
    rng: &mut R,
) -> Result<f64> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::domain(format!(
            "exit-time rate {lambda} is negative"
        )));
    }
    if !(0.0..1.0).contains(&t_start) {
        return Err(Error::domain(format!(
            "exit-time start {t_start} outside [0, 1)"
        )));
    }
    if lambda == 0.0 {
        return Ok(f64::INFINITY);
    }
    let e: f64 = Exp1.sample(rng);
    let e = e / lambda;
    let k0 = schedule.kappa(t_start);
    let u = (1.0 - k0) * -(-e).exp_m1() + k0;
    if u >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok(schedule.kappa_inv(u))
}
