//! Time schedules `κ_t` with their derivative and inverse.
//!
//! Every rate in the engine carries the schedule factor `κ̇_t / (1 − κ_t)`,
//! which diverges as `t → 1`. [`rate_factor`] floors `1 − κ_t` at
//! [`DELTA_MIN`] and rejects times past `1 − DELTA_MIN`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Engine floor on `1 − κ_t` before any division.
pub const DELTA_MIN: f64 = 1e-6;

/// A non-decreasing, invertible map `κ: [0, 1] → [0, 1]` with `κ(0) = 0`
/// and `κ(1) = 1`.
///
/// The raw methods do not validate their arguments; use the
/// `schedule_*` functions for domain-checked evaluation.
pub trait Schedule: Send + Sync + fmt::Debug {
    fn kappa(&self, t: f64) -> f64;
    fn kappa_dot(&self, t: f64) -> f64;
    fn kappa_inv(&self, u: f64) -> f64;
    fn name(&self) -> &str;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeSchedule {
    /// `κ_t = t`.
    Linear,
    /// `κ_t = sin²(πt/2) = cos²(π(1 − t)/2)`.
    Cosine,
}

impl Schedule for TimeSchedule {
    fn kappa(&self, t: f64) -> f64 {
        match self {
            TimeSchedule::Linear => t,
            TimeSchedule::Cosine => {
                let s = (FRAC_PI_2 * t).sin();
                s * s
            }
        }
    }

    fn kappa_dot(&self, t: f64) -> f64 {
        match self {
            TimeSchedule::Linear => 1.0,
            // d/dt sin²(πt/2) = 2 sin(πt/2) cos(πt/2) · π/2 = (π/2) sin(πt)
            TimeSchedule::Cosine => FRAC_PI_2 * (PI * t).sin(),
        }
    }

    fn kappa_inv(&self, u: f64) -> f64 {
        match self {
            TimeSchedule::Linear => u,
            TimeSchedule::Cosine => u.sqrt().asin() / FRAC_PI_2,
        }
    }

    fn name(&self) -> &str {
        match self {
            TimeSchedule::Linear => "linear",
            TimeSchedule::Cosine => "cosine",
        }
    }
}

impl fmt::Display for TimeSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TimeSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(TimeSchedule::Linear),
            "cosine" => Ok(TimeSchedule::Cosine),
            other => Err(Error::config(format!("unknown schedule `{other}`"))),
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::domain(format!("time {t} outside [0, 1]")))
    }
}

pub fn schedule_kappa(schedule: &dyn Schedule, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(schedule.kappa(t))
}

pub fn schedule_kappa_dot(schedule: &dyn Schedule, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(schedule.kappa_dot(t))
}

/// `κ⁻¹(u)` for `u ∈ [0, 1)`; `u = 1` is the singular endpoint.
pub fn schedule_kappa_inv(schedule: &dyn Schedule, u: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(Error::domain(format!(
            "kappa_inv argument {u} outside [0, 1)"
        )));
    }
    Ok(schedule.kappa_inv(u))
}

/// The schedule factor `κ̇_t / (1 − κ_t)`.
pub fn rate_factor(schedule: &dyn Schedule, t: f64) -> Result<f64> {
    if !(0.0..=1.0 - DELTA_MIN).contains(&t) {
        return Err(Error::domain(format!(
            "rate evaluated at t = {t}, beyond the horizon 1 - {DELTA_MIN}"
        )));
    }
    Ok(rate_factor_unchecked(schedule, t))
}

#[inline]
pub(crate) fn rate_factor_unchecked(schedule: &dyn Schedule, t: f64) -> f64 {
    schedule.kappa_dot(t) / (1.0 - schedule.kappa(t)).max(DELTA_MIN)
}

/// `((1 − κ_b) / (1 − κ_a))^λ`, the probability that a jump process with
/// frozen posterior mass `λ` does not fire on `[a, b]`.
#[inline]
pub fn survival_power(schedule: &dyn Schedule, a: f64, b: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 1.0;
    }
    let num = (1.0 - schedule.kappa(b)).max(0.0);
    let den = (1.0 - schedule.kappa(a)).max(DELTA_MIN);
    (num / den).min(1.0).powf(lambda)
}
