#![allow(clippy::needless_range_loop)]

use std::sync::Arc;

use proptest::prelude::*;

use super::*;
use crate::distributions::{JointTable, SourceSpec};
use crate::eval::{one_step_kernel_oracle, tv_distance, OracleOptions};
use crate::grid::{make_uniform_grid, TimeGrid};
use crate::path::ExactPosterior;
use crate::schedule::{survival_power, Schedule};
use crate::space::StateSpace;

fn path(dims: usize, vocab: usize, probs: Vec<f64>, source: SourceSpec) -> Arc<MixturePath> {
    let table = JointTable::new(StateSpace::new(dims, vocab).unwrap(), probs).unwrap();
    Arc::new(MixturePath::new(TimeSchedule::Linear, source, table).unwrap())
}

fn toy_2x3(source: SourceSpec) -> Arc<MixturePath> {
    path(
        2,
        3,
        vec![0.2, 0.05, 0.05, 0.1, 0.15, 0.05, 0.1, 0.1, 0.2],
        source,
    )
}

fn spec_for(path: &Arc<MixturePath>, kind: SamplerKind, grid: TimeGrid) -> SamplerSpec {
    let spec = SamplerSpec::new(kind, grid, Arc::new(ExactPosterior::new(path.clone())));
    if kind.is_general() {
        spec.with_cond_rate(Arc::new(MixtureRate::new(path.schedule())))
    } else {
        spec
    }
}

fn one_step_histogram(
    spec: &SamplerSpec,
    path: &MixturePath,
    x: &State,
    k: usize,
    n: u64,
) -> Vec<f64> {
    let space = path.space();
    let mut hist = vec![0.0; space.num_states().unwrap()];
    for i in 0..n {
        let out = sampler_step(spec, path, x, k, TrajectoryKey::new(11, i)).unwrap();
        hist[space.encode(&out.state)] += 1.0 / n as f64;
    }
    hist
}

fn stay_frequency(spec: &SamplerSpec, path: &MixturePath, x: &State, k: usize, n: u64) -> f64 {
    let stays = (0..n)
        .filter(|&i| {
            sampler_step(spec, path, x, k, TrajectoryKey::new(5, i))
                .unwrap()
                .state
                == *x
        })
        .count();
    stays as f64 / n as f64
}

#[test]
fn kind_names_round_trip() {
    for kind in SamplerKind::ALL {
        assert_eq!(kind.name().parse::<SamplerKind>().unwrap(), kind);
    }
    assert_eq!(
        "Time_Corrected".parse::<SamplerKind>().unwrap(),
        SamplerKind::TimeCorrected
    );
    assert!("midpoint".parse::<SamplerKind>().is_err());
}

#[test]
fn spec_validation() {
    let p = toy_2x3(SourceSpec::Uniform);
    let grid = make_uniform_grid(4, 0.01).unwrap();
    let ok = spec_for(&p, SamplerKind::Euler, grid.clone());
    assert!(ok.validate(&p).is_ok());
    assert!(ok.clone().with_m(0).validate(&p).is_err());
    assert!(ok.clone().with_j(0).validate(&p).is_err());
    assert!(ok.clone().with_t_theta(0.995).validate(&p).is_err());
    let general = SamplerSpec::new(
        SamplerKind::EulerGeneral,
        grid,
        Arc::new(ExactPosterior::new(p.clone())),
    );
    assert!(matches!(general.validate(&p), Err(Error::Config(_))));
    assert_eq!(ok.effective_j(2), 1);
    assert_eq!(ok.clone().with_j(9).effective_j(2), 2);
}

#[test]
fn pick_index_skips_zero_weights() {
    let w = [0.0, 0.25, 0.0, 0.75];
    assert_eq!(pick_index(&w, 1.0, 0.0), 1);
    assert_eq!(pick_index(&w, 1.0, 0.2499), 1);
    assert_eq!(pick_index(&w, 1.0, 0.25), 3);
    assert_eq!(pick_index(&w, 1.0, 0.9999999), 3);
    assert_eq!(pick_excluding(&w, 1, 0.75, 0.1), 3);
}

#[test]
fn unmasked_states_are_frozen() {
    let p = toy_2x3(SourceSpec::Masked);
    let grid = make_uniform_grid(5, 0.01).unwrap();
    let x = State::new(vec![2, 1]);
    for kind in SamplerKind::ALL {
        let spec = spec_for(&p, kind, grid.clone());
        for i in 0..200 {
            let out = sampler_step(&spec, &p, &x, 3, TrajectoryKey::new(1, i)).unwrap();
            assert_eq!(out.state, x, "{kind}");
            assert_eq!(out.nfe, 0, "{kind}");
        }
    }
}

#[test]
fn uniformization_matches_exact_marginal() {
    let p = path(2, 2, vec![0.4, 0.1, 0.2, 0.3], SourceSpec::Uniform);
    let reference = p.exact_marginal(0.99, &[0, 1]).unwrap();
    for k in [1, 10] {
        let spec = spec_for(
            &p,
            SamplerKind::Uniformization,
            make_uniform_grid(k, 0.01).unwrap(),
        );
        let n = 1_000_000u64;
        let mut hist = vec![0.0; 4];
        for i in 0..n {
            let t = run_trajectory(&spec, &p, 3, i).unwrap();
            hist[p.space().encode(&t.final_state)] += 1.0 / n as f64;
        }
        let tv = tv_distance(&hist, &reference.probs).unwrap();
        assert!(tv <= 0.005, "K = {k}: TV {tv}");
    }
}

#[test]
fn uniformization_event_count_is_poisson() {
    let p = path(2, 2, vec![0.4, 0.1, 0.2, 0.3], SourceSpec::Uniform);
    let grid = make_uniform_grid(4, 0.01).unwrap();
    let (a, b) = grid.interval(3);
    let mean = 2.0 * (b - a) / (1.0 - b);
    let spec = spec_for(&p, SamplerKind::Uniformization, grid).with_cache(false);
    let x = State::new(vec![0, 1]);
    let n = 100_000u64;
    // Without caching every event costs one evaluation.
    let total: u64 = (0..n)
        .map(|i| {
            sampler_step(&spec, &p, &x, 3, TrajectoryKey::new(2, i))
                .unwrap()
                .nfe
        })
        .sum();
    let sigma = (mean / n as f64).sqrt();
    assert!((total as f64 / n as f64 - mean).abs() <= 3.0 * sigma);
}

#[test]
fn tau_leaping_matches_poisson_enumeration() {
    let p = path(1, 3, vec![0.5, 0.3, 0.2], SourceSpec::Uniform);
    let grid = make_uniform_grid(2, 0.01).unwrap();
    let x = State::new(vec![1]);
    let spec = spec_for(&p, SamplerKind::TauLeaping, grid.clone());
    let oracle = one_step_kernel_oracle(
        SamplerKind::TauLeaping,
        &p,
        &x,
        &grid,
        2,
        OracleOptions {
            poisson_cap: 5,
            ..Default::default()
        },
    )
    .unwrap();
    let hist = one_step_histogram(&spec, &p, &x, 2, 1_000_000);
    let tv = tv_distance(&hist, &oracle.probs).unwrap();
    assert!(tv <= 1e-3 + oracle.tail, "TV {tv}, tail {}", oracle.tail);
}

#[test]
fn tau_leaping_output_stays_in_data_vocab() {
    let p = toy_2x3(SourceSpec::Masked);
    let grid = make_uniform_grid(2, 0.01).unwrap();
    let spec = spec_for(&p, SamplerKind::TauLeaping, grid);
    for i in 0..5000 {
        let t = run_trajectory(&spec, &p, 8, i).unwrap();
        assert!(t.final_state.tokens().iter().all(|&tok| tok <= 3));
    }
}

#[test]
fn tau_leaping_shares_draws_with_euler() {
    // With at most one event per coordinate the two updates coincide.
    let p = toy_2x3(SourceSpec::Uniform);
    let grid = make_uniform_grid(50, 0.01).unwrap();
    let tau = spec_for(&p, SamplerKind::TauLeaping, grid.clone());
    let euler = spec_for(&p, SamplerKind::Euler, grid);
    let x = State::new(vec![0, 2]);
    let same = (0..2000)
        .filter(|&i| {
            let key = TrajectoryKey::new(6, i);
            sampler_step(&tau, &p, &x, 10, key).unwrap().state
                == sampler_step(&euler, &p, &x, 10, key).unwrap().state
        })
        .count();
    assert!(same >= 1990, "{same}");
}

#[test]
fn euler_stay_probability() {
    // One coordinate from the mask has posterior mass 1, so τλ = τ/(1 − a).
    let p = path(1, 2, vec![0.3, 0.7], SourceSpec::Masked);
    let grid = TimeGrid::from_points(vec![0.0, 0.3, 0.3 + 0.7 * 0.7, 0.99], 0.01).unwrap();
    let spec = spec_for(&p, SamplerKind::Euler, grid);
    let freq = stay_frequency(&spec, &p, &State::new(vec![2]), 2, 100_000);
    assert!((freq - (-0.7f64).exp()).abs() <= 0.005, "{freq}");
}

#[test]
fn time_corrected_stay_probability() {
    let p = path(1, 2, vec![0.3, 0.7], SourceSpec::Masked);
    let grid = TimeGrid::from_points(vec![0.0, 0.5, 0.99], 0.01).unwrap();
    let x = State::new(vec![2]);
    let tc = stay_frequency(
        &spec_for(&p, SamplerKind::TimeCorrected, grid.clone()),
        &p,
        &x,
        1,
        100_000,
    );
    let eu = stay_frequency(&spec_for(&p, SamplerKind::Euler, grid), &p, &x, 1, 100_000);
    assert!((tc - 0.5).abs() <= 0.01, "{tc}");
    assert!((eu - 0.6065).abs() <= 0.01, "{eu}");
    assert_eq!(survival_power(&TimeSchedule::Linear, 0.4, 0.4, 1.0), 1.0);
}

#[test]
fn location_corrected_no_jump_probability() {
    // Two masked coordinates: total posterior mass 2.
    let p = path(2, 2, vec![0.4, 0.1, 0.2, 0.3], SourceSpec::Masked);
    let grid = TimeGrid::from_points(vec![0.0, 0.5, 0.99], 0.01).unwrap();
    let spec = spec_for(&p, SamplerKind::LocationCorrected, grid);
    let freq = stay_frequency(&spec, &p, &State::new(vec![2, 2]), 1, 100_000);
    assert!((freq - 0.25).abs() <= 0.01, "{freq}");
}

#[test]
fn location_corrected_uses_one_or_two_calls() {
    let p = toy_2x3(SourceSpec::Uniform);
    let spec = spec_for(
        &p,
        SamplerKind::LocationCorrected,
        make_uniform_grid(3, 0.01).unwrap(),
    )
    .with_cache(false);
    let x = State::new(vec![0, 2]);
    let mut seen = [false; 3];
    for i in 0..2000 {
        let out = sampler_step(&spec, &p, &x, 2, TrajectoryKey::new(4, i)).unwrap();
        assert!((1..=2).contains(&out.nfe));
        seen[out.nfe as usize] = true;
        if out.nfe == 1 {
            assert_eq!(out.state, x);
        }
    }
    assert!(seen[1] && seen[2]);
}

#[test]
fn one_step_laws_match_oracles() {
    let n = 1_000_000;
    let uniform = toy_2x3(SourceSpec::Uniform);
    let grid = make_uniform_grid(4, 0.01).unwrap();
    let x = State::new(vec![1, 2]);
    for kind in [
        SamplerKind::Euler,
        SamplerKind::TimeCorrected,
        SamplerKind::LocationCorrected,
    ] {
        let spec = spec_for(&uniform, kind, grid.clone());
        let oracle =
            one_step_kernel_oracle(kind, &uniform, &x, &grid, 2, OracleOptions::default()).unwrap();
        let tv = tv_distance(
            &one_step_histogram(&spec, &uniform, &x, 2, n),
            &oracle.probs,
        )
        .unwrap();
        assert!(tv <= 0.01, "{kind}: TV {tv}");
    }
}

#[test]
fn euler_general_matches_enumeration() {
    let p = path(1, 3, vec![0.5, 0.3, 0.2], SourceSpec::Uniform);
    let grid = make_uniform_grid(3, 0.01).unwrap();
    let (a, b) = grid.interval(2);
    let x = State::new(vec![1]);
    let post = p.exact_posterior(a, &x).unwrap();
    let jump = 1.0 - (-(b - a) / (1.0 - a)).exp();
    let mut oracle = vec![0.0; 3];
    for z in 0..3 {
        let pz = post.prob(0, z);
        if z == 1 {
            oracle[1] += pz;
        } else {
            oracle[z] += pz * jump;
            oracle[1] += pz * (1.0 - jump);
        }
    }
    let spec = spec_for(&p, SamplerKind::EulerGeneral, grid);
    let tv = tv_distance(&one_step_histogram(&spec, &p, &x, 2, 1_000_000), &oracle).unwrap();
    assert!(tv <= 0.005, "TV {tv}");
}

#[test]
fn mixture_rate_targets_only_x1() {
    let rate = MixtureRate::new(TimeSchedule::Cosine);
    let mut row = vec![0.0; 4];
    rate.fill_row(0.3, 0, 2, 2, &mut row);
    assert!(row.iter().all(|&r| r == 0.0));
    rate.fill_row(0.3, 0, 2, 0, &mut row);
    assert_eq!(row[1..], [0.0, 0.0, 0.0]);
    assert!(row[0] > 0.0);
    for z in 0..4 {
        assert_eq!(rate.rate(0.3, 0, 2, z, 0), row[z]);
    }
}

/// `exp(−(τ/m) Σ_i κ̇/(1 − κ)(s_i))` for the mixture rate.
fn staircase_survival(a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let sum: f64 = (0..m)
        .map(|i| rate_factor_unchecked(&TimeSchedule::Linear, a + i as f64 * h))
        .sum();
    (-h * sum).exp()
}

#[test]
fn staircase_approaches_power_law() {
    let exact = survival_power(&TimeSchedule::Linear, 0.0, 0.5, 1.0);
    assert!((staircase_survival(0.0, 0.5, 32) - exact).abs() <= 0.01);
    assert!(
        (staircase_survival(0.0, 0.5, 256) - exact).abs()
            < (staircase_survival(0.0, 0.5, 32) - exact).abs()
    );
}

#[derive(Debug)]
struct ConstantRate(f64);

impl ConditionalRate for ConstantRate {
    fn rate(&self, _t: f64, _d: usize, x: usize, z: usize, x1: usize) -> f64 {
        if z == x1 && z != x {
            self.0
        } else {
            0.0
        }
    }
}

#[test]
fn constant_rate_survival_ignores_m() {
    let p = path(1, 2, vec![0.3, 0.7], SourceSpec::Masked);
    let grid = TimeGrid::from_points(vec![0.0, 0.4, 0.99], 0.01).unwrap();
    let x = State::new(vec![2]);
    let expected = (-0.4f64 * 1.5).exp();
    for m in [1, 7, 32] {
        let spec = SamplerSpec::new(
            SamplerKind::TimeCorrectedGeneral,
            grid.clone(),
            Arc::new(ExactPosterior::new(p.clone())),
        )
        .with_cond_rate(Arc::new(ConstantRate(1.5)))
        .with_m(m);
        let freq = stay_frequency(&spec, &p, &x, 1, 100_000);
        let sigma = (expected * (1.0 - expected) / 100_000.0).sqrt();
        assert!(
            (freq - expected).abs() <= 4.0 * sigma,
            "m = {m}: {freq} vs {expected}"
        );
    }
}

#[test]
fn general_reductions_are_bit_identical() {
    let p = toy_2x3(SourceSpec::Uniform);
    let grid = make_uniform_grid(6, 0.01).unwrap();
    let euler = spec_for(&p, SamplerKind::EulerGeneral, grid.clone());
    let tc1 = spec_for(&p, SamplerKind::TimeCorrectedGeneral, grid.clone()).with_m(1);
    let tc = spec_for(&p, SamplerKind::TimeCorrectedGeneral, grid.clone()).with_m(8);
    let lc = spec_for(&p, SamplerKind::LocationCorrectedGeneral, grid.clone())
        .with_m(8)
        .with_t_theta(grid.horizon());
    for i in 0..2000 {
        assert_eq!(
            run_trajectory(&euler, &p, 9, i).unwrap(),
            run_trajectory(&tc1, &p, 9, i).unwrap()
        );
        assert_eq!(
            run_trajectory(&tc, &p, 9, i).unwrap(),
            run_trajectory(&lc, &p, 9, i).unwrap()
        );
    }
}

#[test]
fn general_location_correction_stays_within_two_calls() {
    let p = toy_2x3(SourceSpec::Uniform);
    let grid = make_uniform_grid(3, 0.01).unwrap();
    let x = State::new(vec![0, 0]);
    for j in [1, 2, 5] {
        let spec = spec_for(&p, SamplerKind::LocationCorrectedGeneral, grid.clone())
            .with_j(j)
            .with_cache(false);
        let mut two = 0;
        for i in 0..2000 {
            let out = sampler_step(&spec, &p, &x, 2, TrajectoryKey::new(6, i)).unwrap();
            assert!((1..=2).contains(&out.nfe));
            two += usize::from(out.nfe == 2);
        }
        // j is clamped to D = 2, and both coordinates must arrive for a
        // second stage.
        assert!(two > 0, "j = {j}");
    }
}

#[test]
fn masked_source_caps_evaluations_at_d() {
    let p = path(
        3,
        5,
        crate::distributions::blockwise_ar1(3, 5)
            .unwrap()
            .probs()
            .to_vec(),
        SourceSpec::Masked,
    );
    for kind in SamplerKind::ALL {
        for k in [5, 50] {
            let spec = spec_for(&p, kind, make_uniform_grid(k, 0.01).unwrap());
            for i in 0..300 {
                let t = run_trajectory(&spec, &p, 1, i).unwrap();
                assert!(t.nfe <= 3, "{kind} K = {k}: {} calls", t.nfe);
            }
        }
    }
}

#[test]
fn trajectories_are_reproducible() {
    let p = toy_2x3(SourceSpec::Uniform);
    for kind in SamplerKind::ALL {
        let spec = spec_for(&p, kind, make_uniform_grid(7, 0.01).unwrap());
        for i in 0..50 {
            assert_eq!(
                run_trajectory(&spec, &p, 2, i).unwrap(),
                run_trajectory(&spec, &p, 2, i).unwrap()
            );
        }
    }
}

#[test]
fn exit_time_uses_schedule_inverse() {
    let s = TimeSchedule::Cosine;
    let mut rng = crate::rng::keyed_stream(&[3]);
    for _ in 0..1000 {
        let t = sample_exit_time(0.5, 0.2, &s, &mut rng).unwrap();
        if t.is_finite() {
            assert!(t > 0.2 && s.kappa(t) < 1.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn samplers_emit_valid_states(seed in any::<u64>(), k in 1usize..12, which in 0usize..8, masked in any::<bool>()) {
        let source = if masked { SourceSpec::Masked } else { SourceSpec::Uniform };
        let p = toy_2x3(source);
        let kind = SamplerKind::ALL[which];
        let spec = spec_for(&p, kind, make_uniform_grid(k, 0.01).unwrap());
        let t = run_trajectory(&spec, &p, seed, 0).unwrap();
        prop_assert!(p.space().check_state(&t.final_state).is_ok());
        if kind == SamplerKind::LocationCorrected || kind == SamplerKind::LocationCorrectedGeneral {
            prop_assert!(t.nfe <= 2 * k as u64);
        }
    }

    #[test]
    fn arrival_order_is_monotone(seed in any::<u64>()) {
        let p = path(3, 5, crate::distributions::blockwise_ar1(3, 5).unwrap().probs().to_vec(), SourceSpec::Uniform);
        let grid = make_uniform_grid(2, 0.01).unwrap();
        let post = p.exact_posterior(0.0, &State::new(vec![0, 4, 2])).unwrap();
        let rate = MixtureRate::new(p.schedule());
        let found = general::first_stage_arrivals(&rate, &post, grid.interval(1), 8, 6, TrajectoryKey::new(seed, 0), 1);
        for w in found.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        // The j-th order statistic is non-decreasing in j.
        for j in 1..found.len() {
            prop_assert!(found[j - 1].0 <= found[j].0);
        }
    }
}
