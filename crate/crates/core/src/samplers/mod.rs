//! Sampling algorithms for the mixture path.
//!
//! Every sampler advances a state over the intervals `[t_{k−1}, t_k]` of a
//! [`TimeGrid`]. Random draws come from counter-based streams addressed by
//! `(seed, trajectory, step, lane)` (see [`crate::rng`]), so a trajectory is
//! bit-reproducible however trajectories are scheduled across threads.

mod basic;
mod exit_time;
mod general;
mod session;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

pub use exit_time::sample_exit_time;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::path::{MixturePath, PosteriorModel};
use crate::rng::{Lane, TrajectoryKey};
use crate::schedule::{rate_factor_unchecked, TimeSchedule};
use crate::space::State;
use session::Session;

/// Default number of integration cells for the general-rate samplers.
pub const DEFAULT_M: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SamplerKind {
    Uniformization,
    TauLeaping,
    Euler,
    TimeCorrected,
    LocationCorrected,
    EulerGeneral,
    TimeCorrectedGeneral,
    LocationCorrectedGeneral,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 8] = [
        SamplerKind::Uniformization,
        SamplerKind::TauLeaping,
        SamplerKind::Euler,
        SamplerKind::TimeCorrected,
        SamplerKind::LocationCorrected,
        SamplerKind::EulerGeneral,
        SamplerKind::TimeCorrectedGeneral,
        SamplerKind::LocationCorrectedGeneral,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Uniformization => "uniformization",
            SamplerKind::TauLeaping => "tau-leaping",
            SamplerKind::Euler => "euler",
            SamplerKind::TimeCorrected => "time-corrected",
            SamplerKind::LocationCorrected => "location-corrected",
            SamplerKind::EulerGeneral => "euler-general",
            SamplerKind::TimeCorrectedGeneral => "time-corrected-general",
            SamplerKind::LocationCorrectedGeneral => "location-corrected-general",
        }
    }

    /// Whether the kind needs a [`ConditionalRate`].
    pub fn is_general(&self) -> bool {
        matches!(
            self,
            SamplerKind::EulerGeneral
                | SamplerKind::TimeCorrectedGeneral
                | SamplerKind::LocationCorrectedGeneral
        )
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::config(format!("unknown sampler kind `{s}`")))
    }
}

/// A per-coordinate conditional rate `Q_t^d(x, z | x₁)`.
///
/// `rate` is only queried off the diagonal (`z ≠ x`) and must be
/// non-negative and finite for `t ≤ 1 − δ`.
pub trait ConditionalRate: Send + Sync + fmt::Debug {
    fn rate(&self, t: f64, d: usize, x: usize, z: usize, x1: usize) -> f64;

    /// Fills `out[z]` with the rate to every `z`, zero at `z = x`.
    fn fill_row(&self, t: f64, d: usize, x: usize, x1: usize, out: &mut [f64]) {
        for (z, slot) in out.iter_mut().enumerate() {
            *slot = if z == x {
                0.0
            } else {
                self.rate(t, d, x, z, x1)
            };
        }
    }
}

/// The mixture-path rate `κ̇_t/(1 − κ_t)·δ_{x₁}(z)` for `z ≠ x`.
#[derive(Debug, Clone, Copy)]
pub struct MixtureRate {
    schedule: TimeSchedule,
}

impl MixtureRate {
    pub fn new(schedule: TimeSchedule) -> Self {
        Self { schedule }
    }
}

impl ConditionalRate for MixtureRate {
    fn rate(&self, t: f64, _d: usize, x: usize, z: usize, x1: usize) -> f64 {
        if z != x && z == x1 {
            rate_factor_unchecked(&self.schedule, t)
        } else {
            0.0
        }
    }

    fn fill_row(&self, t: f64, _d: usize, x: usize, x1: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|r| *r = 0.0);
        if x1 != x && x1 < out.len() {
            out[x1] = rate_factor_unchecked(&self.schedule, t);
        }
    }
}

/// A configured sampler.
#[derive(Clone)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    pub grid: TimeGrid,
    pub posterior: Arc<dyn PosteriorModel>,
    pub cond_rate: Option<Arc<dyn ConditionalRate>>,
    /// Integration cells per interval for the general-rate samplers.
    pub m: usize,
    /// Arrival rank for the general location-corrected sampler; `None`
    /// means `ceil(D/K)`.
    pub j: Option<usize>,
    /// Location correction is skipped on intervals starting at or before
    /// this time; `1 − δ` disables it everywhere.
    pub t_theta: f64,
    /// Skip posterior calls whose answer is already known (see
    /// [`Session`]).
    pub cache: bool,
}

impl fmt::Debug for SamplerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SamplerSpec")
            .field("kind", &self.kind)
            .field("steps", &self.grid.steps())
            .field("m", &self.m)
            .field("j", &self.j)
            .field("t_theta", &self.t_theta)
            .field("cache", &self.cache)
            .finish()
    }
}

impl SamplerSpec {
    pub fn new(kind: SamplerKind, grid: TimeGrid, posterior: Arc<dyn PosteriorModel>) -> Self {
        Self {
            kind,
            grid,
            posterior,
            cond_rate: None,
            m: DEFAULT_M,
            j: None,
            t_theta: 0.0,
            cache: true,
        }
    }

    pub fn with_cond_rate(mut self, rate: Arc<dyn ConditionalRate>) -> Self {
        self.cond_rate = Some(rate);
        self
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn with_j(mut self, j: usize) -> Self {
        self.j = Some(j);
        self
    }

    pub fn with_t_theta(mut self, t_theta: f64) -> Self {
        self.t_theta = t_theta;
        self
    }

    pub fn with_cache(mut self, cache: bool) -> Self {
        self.cache = cache;
        self
    }

    pub fn validate(&self, path: &MixturePath) -> Result<()> {
        if self.m == 0 {
            return Err(Error::config("m must be >= 1"));
        }
        if self.j == Some(0) {
            return Err(Error::config("j must be >= 1"));
        }
        if !(0.0..=self.grid.horizon()).contains(&self.t_theta) {
            return Err(Error::config(format!(
                "t_theta {} outside [0, 1 - delta = {}]",
                self.t_theta,
                self.grid.horizon()
            )));
        }
        if self.kind.is_general() && self.cond_rate.is_none() {
            return Err(Error::config(format!(
                "sampler {} needs a conditional rate",
                self.kind
            )));
        }
        if self.posterior.space() != path.space() {
            return Err(Error::config(
                "posterior model and path disagree on the state space",
            ));
        }
        Ok(())
    }

    /// Arrival rank used by the general location-corrected sampler,
    /// clamped to `[1, D]`.
    pub fn effective_j(&self, dims: usize) -> usize {
        let k = self.grid.steps();
        self.j.unwrap_or(dims.div_ceil(k)).clamp(1, dims)
    }
}

/// Result of one sampled trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub final_state: State,
    /// Posterior evaluations consumed.
    pub nfe: u64,
    /// Coordinate changes committed.
    pub jumps: u64,
    pub seed: u64,
    pub index: u64,
}

pub(crate) struct StepCtx<'a> {
    pub spec: &'a SamplerSpec,
    pub path: &'a MixturePath,
    pub key: TrajectoryKey,
    pub session: Session<'a>,
    pub jumps: u64,
}

impl<'a> StepCtx<'a> {
    fn new(spec: &'a SamplerSpec, path: &'a MixturePath, key: TrajectoryKey) -> Self {
        let session = Session::new(spec.posterior.as_ref(), path.space(), spec.cache);
        Self {
            spec,
            path,
            key,
            session,
            jumps: 0,
        }
    }

    fn step(&mut self, x: &mut State, k: usize) -> Result<()> {
        match self.spec.kind {
            SamplerKind::Uniformization => basic::uniformization_interval(self, x, k),
            SamplerKind::TauLeaping => basic::tau_leaping_step(self, x, k),
            SamplerKind::Euler => basic::euler_step(self, x, k),
            SamplerKind::TimeCorrected => basic::time_corrected_step(self, x, k),
            SamplerKind::LocationCorrected => basic::location_corrected_step(self, x, k),
            SamplerKind::EulerGeneral => general::euler_general_step(self, x, k),
            SamplerKind::TimeCorrectedGeneral => general::time_corrected_general_step(self, x, k),
            SamplerKind::LocationCorrectedGeneral => {
                general::location_corrected_general_step(self, x, k)
            }
        }
    }
}

/// Outcome of a single step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub state: State,
    pub nfe: u64,
    pub jumps: u64,
}

/// Advances `x_prev` over interval `k` (1-based) with the spec's sampler,
/// drawing from the streams of `key`.
pub fn sampler_step(
    spec: &SamplerSpec,
    path: &MixturePath,
    x_prev: &State,
    k: usize,
    key: TrajectoryKey,
) -> Result<StepOutcome> {
    spec.validate(path)?;
    path.space().check_state(x_prev)?;
    if !(1..=spec.grid.steps()).contains(&k) {
        return Err(Error::domain(format!(
            "step {k} outside 1..={}",
            spec.grid.steps()
        )));
    }
    let mut ctx = StepCtx::new(spec, path, key);
    let mut x = x_prev.clone();
    ctx.step(&mut x, k)?;
    Ok(StepOutcome {
        state: x,
        nfe: ctx.session.nfe(),
        jumps: ctx.jumps,
    })
}

/// Draws `X(0)` from the source and applies steps `1..=K`.
pub fn run_trajectory(
    spec: &SamplerSpec,
    path: &MixturePath,
    seed: u64,
    index: u64,
) -> Result<Trajectory> {
    spec.validate(path)?;
    run_validated(spec, path, TrajectoryKey::new(seed, index))
}

pub(crate) fn run_validated(
    spec: &SamplerSpec,
    path: &MixturePath,
    key: TrajectoryKey,
) -> Result<Trajectory> {
    let space = path.space();
    let mut x = path.source().sample(&space, &mut key.stream(0, Lane::Init));
    let mut ctx = StepCtx::new(spec, path, key);
    for k in 1..=spec.grid.steps() {
        ctx.step(&mut x, k)?;
    }
    Ok(Trajectory {
        final_state: x,
        nfe: ctx.session.nfe(),
        jumps: ctx.jumps,
        seed: key.seed(),
        index: key.trajectory(),
    })
}

/// Index `i` with `Σ_{j<i} w_j ≤ u·total < Σ_{j≤i} w_j`; skips zero weights.
#[inline]
pub(crate) fn pick_index(weights: &[f64], total: f64, u: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if target < acc {
                return i;
            }
        }
    }
    last
}

/// Like [`pick_index`] over a posterior row with entry `skip` removed.
#[inline]
pub(crate) fn pick_excluding(row: &[f64], skip: usize, total: f64, u: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    let mut last = usize::MAX;
    for (i, &w) in row.iter().enumerate() {
        if i != skip && w > 0.0 {
            acc += w;
            last = i;
            if target < acc {
                return i;
            }
        }
    }
    debug_assert!(last != usize::MAX, "no admissible target");
    last
}

#[cfg(test)]
mod tests;
