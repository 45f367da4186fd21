use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use jumpflow::samplers::run_trajectory;
use jumpflow::{SamplerKind, SourceSpec, State};
use jumpflow_bench::{ar1_path, spec};

fn trajectories(c: &mut Criterion) {
    let mut group = c.benchmark_group("trajectory_d3_s8");
    for source in [SourceSpec::Uniform, SourceSpec::Masked] {
        let path = ar1_path(3, 8, source.clone());
        let tag = if source.is_masked() {
            "masked"
        } else {
            "uniform"
        };
        for kind in [
            SamplerKind::Uniformization,
            SamplerKind::TauLeaping,
            SamplerKind::Euler,
            SamplerKind::TimeCorrected,
            SamplerKind::LocationCorrected,
            SamplerKind::LocationCorrectedGeneral,
        ] {
            let spec = spec(&path, kind, 10);
            let mut i = 0u64;
            group.bench_function(BenchmarkId::new(kind.name(), tag), |b| {
                b.iter(|| {
                    i += 1;
                    black_box(run_trajectory(&spec, &path, 0, i).unwrap())
                })
            });
        }
    }
    group.finish();
}

fn posterior(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact_posterior");
    for dims in [3, 12, 48] {
        let path = ar1_path(dims, 8, SourceSpec::Uniform);
        let x = State::new((0..dims).map(|d| d % 8).collect());
        group.bench_with_input(BenchmarkId::from_parameter(dims), &x, |b, x| {
            b.iter(|| black_box(path.exact_posterior(0.5, x).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, trajectories, posterior);
criterion_main!(benches);
