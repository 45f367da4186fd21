//! Sampling engine and exact oracles for discrete flow models on finite
//! state spaces.
//!
//! The crate is organized bottom-up:
//!
//! - [`space`], [`schedule`], [`grid`]: state spaces, time schedules `κ_t`
//!   and time-discretization grids.
//! - [`distributions`]: data distributions `p₁` (dense joint tables, the
//!   blockwise AR(1) family) and source distributions `p₀`.
//! - [`path`]: the mixture probability path, exact marginals/posteriors and
//!   the oracle transition rate.
//! - [`samplers`]: uniformization, tau-leaping, Euler, time-corrected and
//!   location-corrected samplers plus their general-conditional-rate
//!   variants.
//! - [`schedule_opt`]: the constant `τ_k·M_k` grid solver.
//! - [`eval`]: total variation, one-step kernel oracles and benchmark sweeps.
//! - [`check`]: the built-in invariant suite behind `jumpflow check`.

pub mod check;
pub mod distributions;
pub mod error;
pub mod eval;
pub mod grid;
pub mod path;
pub mod rng;
pub mod samplers;
pub mod schedule;
pub mod schedule_opt;
pub mod space;

pub use distributions::{FactoredJoint, JointTable, SourceSpec};
pub use error::{Error, Result};
pub use eval::{SweepConfig, SweepRecord, SweepSampler};
pub use grid::TimeGrid;
pub use path::{ExactPosterior, MixturePath, PerturbedPosterior, PosteriorEval, PosteriorModel};
pub use samplers::{SamplerKind, SamplerSpec, Trajectory};
pub use schedule::{Schedule, TimeSchedule};
pub use space::{State, StateSpace};
