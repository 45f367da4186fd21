//! Time-discretization grids `0 = t_0 < t_1 < … < t_K = 1 − δ`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::schedule::TimeSchedule;
use crate::schedule_opt::{constant_product_grid, RateBoundProfile};

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
    delta: f64,
}

fn check_args(k: usize, delta: f64) -> Result<()> {
    if k == 0 {
        return Err(Error::config("grid needs at least one step (K >= 1)"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::config(format!(
            "early-stopping delta {delta} outside (0, 1)"
        )));
    }
    Ok(())
}

impl TimeGrid {
    /// Validates an explicit list of grid points.
    pub fn from_points(points: Vec<f64>, delta: f64) -> Result<Self> {
        check_args(points.len().saturating_sub(1), delta)?;
        if points[0] != 0.0 {
            return Err(Error::config(format!(
                "grid must start at 0, got {}",
                points[0]
            )));
        }
        let last = *points.last().unwrap();
        if last != 1.0 - delta {
            return Err(Error::config(format!(
                "grid must end at 1 - delta = {}, got {last}",
                1.0 - delta
            )));
        }
        if let Some(w) = points
            .windows(2)
            .find(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(Error::config(format!(
                "grid not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self { points, delta })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Number of steps `K`.
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    /// The horizon `t_K = 1 − δ`.
    pub fn horizon(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// `[t_{k−1}, t_k]` for `k ∈ 1..=K`.
    pub fn interval(&self, k: usize) -> (f64, f64) {
        (self.points[k - 1], self.points[k])
    }

    /// Step widths `τ_k`, `k = 1..=K`.
    pub fn widths(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// `t_k = k(1 − δ)/K`.
pub fn make_uniform_grid(k: usize, delta: f64) -> Result<TimeGrid> {
    check_args(k, delta)?;
    let end = 1.0 - delta;
    let mut points: Vec<f64> = (0..=k).map(|i| i as f64 * end / k as f64).collect();
    points[k] = end;
    TimeGrid::from_points(points, delta)
}

/// Grid for the linear schedule with `τ_k = δ^{(k−1)/K} − δ^{k/K}`, which
/// makes `τ_k / (1 − t_k)` the constant `δ^{−1/K} − 1`.
pub fn make_optimal_linear_grid(k: usize, delta: f64) -> Result<TimeGrid> {
    check_args(k, delta)?;
    // Partial sums telescope to t_i = 1 − δ^{i/K}.
    let mut points: Vec<f64> = (0..=k)
        .map(|i| 1.0 - delta.powf(i as f64 / k as f64))
        .collect();
    points[0] = 0.0;
    points[k] = 1.0 - delta;
    TimeGrid::from_points(points, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridKind {
    Uniform,
    /// Closed-form optimal grid; only defined for the linear schedule, other
    /// schedules fall back to the uniform grid.
    Optimal,
    ConstantProduct,
}

impl GridKind {
    pub fn name(&self) -> &'static str {
        match self {
            GridKind::Uniform => "uniform",
            GridKind::Optimal => "optimal",
            GridKind::ConstantProduct => "constant-product",
        }
    }
}

impl fmt::Display for GridKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(GridKind::Uniform),
            "optimal" => Ok(GridKind::Optimal),
            "constant-product" | "constant_product" => Ok(GridKind::ConstantProduct),
            other => Err(Error::config(format!("unknown grid kind `{other}`"))),
        }
    }
}

pub fn build_grid(
    kind: GridKind,
    schedule: TimeSchedule,
    k: usize,
    delta: f64,
) -> Result<TimeGrid> {
    match (kind, schedule) {
        (GridKind::Uniform, _) | (GridKind::Optimal, TimeSchedule::Cosine) => {
            make_uniform_grid(k, delta)
        }
        (GridKind::Optimal, TimeSchedule::Linear) => make_optimal_linear_grid(k, delta),
        (GridKind::ConstantProduct, s) => {
            constant_product_grid(&RateBoundProfile::new(s, delta), k, delta)
        }
    }
}
