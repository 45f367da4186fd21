//! Shared fixtures for the criterion benchmarks.

use std::sync::Arc;

use jumpflow::distributions::blockwise_ar1_factored;
use jumpflow::grid::{build_grid, GridKind};
use jumpflow::{ExactPosterior, MixturePath, SamplerKind, SamplerSpec, SourceSpec, TimeSchedule};

/// Blockwise AR(1) path with exact posterior, as used by the sweeps.
pub fn ar1_path(dims: usize, vocab: usize, source: SourceSpec) -> Arc<MixturePath> {
    let data = blockwise_ar1_factored(dims, vocab).expect("valid AR(1) parameters");
    Arc::new(MixturePath::new(TimeSchedule::Linear, source, data).expect("valid path"))
}

pub fn spec(path: &Arc<MixturePath>, kind: SamplerKind, k: usize) -> SamplerSpec {
    let grid = build_grid(GridKind::Uniform, path.schedule(), k, 0.01).expect("valid grid");
    let posterior = Arc::new(ExactPosterior::new(path.clone()));
    let mut spec = SamplerSpec::new(kind, grid, posterior);
    if kind.is_general() {
        spec = spec.with_cond_rate(Arc::new(jumpflow::samplers::MixtureRate::new(
            path.schedule(),
        )));
    }
    spec
}
