//! Grids that equalize `τ_k·M_k`, where `M_k` bounds the schedule factor
//! `κ̇/(1 − κ)` on the k-th interval.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::schedule::{rate_factor_unchecked, Schedule, TimeSchedule};

const INTERIOR_SAMPLES: usize = 8;
const MAX_ITERS: usize = 200;
const LANDING_TOL: f64 = 1e-12;

/// `M(t_a, t_b) = sup_{[t_a, t_b]} κ̇/(1 − κ)` for one schedule.
#[derive(Debug, Clone, Copy)]
pub struct RateBoundProfile {
    schedule: TimeSchedule,
    horizon: f64,
}

impl RateBoundProfile {
    pub fn new(schedule: TimeSchedule, delta: f64) -> Self {
        Self {
            schedule,
            horizon: 1.0 - delta,
        }
    }

    pub fn schedule(&self) -> TimeSchedule {
        self.schedule
    }

    pub fn rate_bound(&self, t_a: f64, t_b: f64) -> Result<f64> {
        if !(0.0 <= t_a && t_a <= t_b) {
            return Err(Error::domain(format!("invalid interval [{t_a}, {t_b}]")));
        }
        if t_b > self.horizon {
            return Err(Error::domain(format!(
                "interval end {t_b} beyond horizon {}",
                self.horizon
            )));
        }
        Ok(self.bound_unchecked(t_a, t_b))
    }

    pub(crate) fn bound_unchecked(&self, t_a: f64, t_b: f64) -> f64 {
        let s: &dyn Schedule = &self.schedule;
        match self.schedule {
            TimeSchedule::Linear => 1.0 / (1.0 - t_b),
            TimeSchedule::Cosine => {
                let n = INTERIOR_SAMPLES + 1;
                (0..=n)
                    .map(|i| {
                        let t = if i == n {
                            t_b
                        } else {
                            t_a + (t_b - t_a) * i as f64 / n as f64
                        };
                        rate_factor_unchecked(s, t)
                    })
                    .fold(0.0, f64::max)
            }
        }
    }
}

/// Shorthand for [`RateBoundProfile::rate_bound`].
pub fn rate_bound(profile: &RateBoundProfile, t_a: f64, t_b: f64) -> Result<f64> {
    profile.rate_bound(t_a, t_b)
}

/// Left endpoint `t_a` with `(t_b − t_a)·M(t_a, t_b) = c`, or `None` when even
/// `t_a = 0` yields a product below `c`.
fn step_left(profile: &RateBoundProfile, t_b: f64, c: f64) -> Option<f64> {
    let product = |t_a: f64| (t_b - t_a) * profile.bound_unchecked(t_a, t_b);
    if product(0.0) < c {
        return None;
    }
    // product is non-increasing in t_a and vanishes at t_b.
    let (mut lo, mut hi) = (0.0, t_b);
    for _ in 0..MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        if product(mid) >= c {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * t_b {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

enum Landing {
    /// Reached zero before using all K steps: `c` is too large.
    Early,
    /// Position after K steps (≥ 0).
    At(f64, Vec<f64>),
}

fn march(profile: &RateBoundProfile, k: usize, c: f64) -> Landing {
    let mut points = Vec::with_capacity(k + 1);
    let mut t = profile.horizon;
    points.push(t);
    for _ in 0..k {
        match step_left(profile, t, c) {
            Some(next) => t = next,
            None => return Landing::Early,
        }
        points.push(t);
    }
    Landing::At(t, points)
}

/// Finds `c*` by bisection so that stepping right-to-left from `1 − δ` with
/// `τ_k = c*/M_k` lands at `t = 0` after exactly `K` steps.
pub fn constant_product_grid(profile: &RateBoundProfile, k: usize, delta: f64) -> Result<TimeGrid> {
    if k == 0 {
        return Err(Error::config("grid needs at least one step (K >= 1)"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::config(format!(
            "early-stopping delta {delta} outside (0, 1)"
        )));
    }
    let profile = RateBoundProfile::new(profile.schedule, delta);
    let horizon = 1.0 - delta;
    if k == 1 {
        return TimeGrid::from_points(vec![0.0, horizon], delta);
    }

    let mut lo = 1e-12;
    let mut hi = 10.0 * horizon * profile.bound_unchecked(0.0, horizon);
    for _ in 0..MAX_ITERS {
        let c = 0.5 * (lo + hi);
        match march(&profile, k, c) {
            Landing::Early => hi = c,
            Landing::At(t0, points) => {
                if t0 <= LANDING_TOL {
                    let mut points: Vec<f64> = points.into_iter().rev().collect();
                    points[0] = 0.0;
                    points[k] = horizon;
                    return TimeGrid::from_points(points, delta);
                }
                lo = c;
            }
        }
    }
    Err(Error::Numeric(format!(
        "constant-product bisection did not converge in {MAX_ITERS} iterations (K = {k}, delta = {delta})"
    )))
}
