//! Built-in invariant suite: schedule identities, grid identities, exit-time
//! survival laws and posterior sanity.
//!
//! Each check yields a line `CHECK <name> PASS|FAIL <detail>`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::distributions::{blockwise_ar1, JointTable, SourceSpec};
use crate::grid::{make_optimal_linear_grid, make_uniform_grid};
use crate::path::{ExactPosterior, MixturePath};
use crate::rng::{keyed_stream, TrajectoryKey};
use crate::samplers::{sample_exit_time, sampler_step, SamplerKind, SamplerSpec};
use crate::schedule::{survival_power, Schedule, TimeSchedule};
use crate::schedule_opt::{constant_product_grid, RateBoundProfile};
use crate::space::{State, StateSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "CHECK {} {verdict} {}", self.name, self.detail)
    }
}

/// The full suite over the shipped schedules.
pub fn run_checks() -> Vec<CheckResult> {
    let schedules: [(&str, &dyn Schedule); 2] = [
        ("linear", &TimeSchedule::Linear),
        ("cosine", &TimeSchedule::Cosine),
    ];
    let mut out = run_schedule_checks(&schedules);
    out.extend(grid_checks());
    out.extend(sampler_survival_checks());
    out.extend(posterior_checks());
    out
}

/// Schedule-level checks for arbitrary schedules, so a faulty implementation
/// can be injected.
pub fn run_schedule_checks(schedules: &[(&str, &dyn Schedule)]) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for &(name, s) in schedules {
        out.push(kappa_dot_check(name, s));
        out.push(kappa_inv_check(name, s));
        out.push(boundary_check(name, s));
        out.push(exit_time_check(name, s));
    }
    out
}

fn kappa_dot_check(name: &str, s: &dyn Schedule) -> CheckResult {
    let h = 1e-6;
    let mut rng = keyed_stream(&[0xd07]);
    let worst = (0..1000)
        .map(|_| {
            let t: f64 = rng.random_range(h..1.0 - h);
            let fd = (s.kappa(t + h) - s.kappa(t - h)) / (2.0 * h);
            (s.kappa_dot(t) - fd).abs()
        })
        .fold(0.0, f64::max);
    CheckResult::new(
        format!("kappa_dot_fd.{name}"),
        worst <= 1e-5,
        format!("max_err={worst:.3e}"),
    )
}

fn kappa_inv_check(name: &str, s: &dyn Schedule) -> CheckResult {
    let worst = (0..=1000)
        .map(|i| {
            let t = 0.99 * i as f64 / 1000.0;
            (s.kappa_inv(s.kappa(t)) - t).abs()
        })
        .fold(0.0, f64::max);
    CheckResult::new(
        format!("kappa_inv_roundtrip.{name}"),
        worst <= 1e-10,
        format!("max_err={worst:.3e}"),
    )
}

fn boundary_check(name: &str, s: &dyn Schedule) -> CheckResult {
    let ends = s.kappa(0.0) == 0.0 && (s.kappa(1.0) - 1.0).abs() < 1e-15;
    let monotone =
        (1..=1000).all(|i| s.kappa(i as f64 / 1000.0) >= s.kappa((i - 1) as f64 / 1000.0));
    let nonneg = (0..=1000).all(|i| s.kappa_dot(i as f64 / 1000.0) >= 0.0);
    CheckResult::new(
        format!("kappa_shape.{name}"),
        ends && monotone && nonneg,
        format!("endpoints={ends} monotone={monotone} nonneg_rate={nonneg}"),
    )
}

fn within_3_sigma(hits: usize, n: usize, p: f64) -> (bool, f64) {
    let freq = hits as f64 / n as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    ((freq - p).abs() <= 3.0 * sigma.max(1e-12), freq)
}

fn exit_time_check(name: &str, s: &dyn Schedule) -> CheckResult {
    let n = 100_000;
    let (a, b, lambda) = (0.2, 0.6, 1.5);
    let expected = survival_power(s, a, b, lambda);
    let mut rng = keyed_stream(&[0xe217]);
    let mut hits = 0;
    for _ in 0..n {
        match sample_exit_time(lambda, a, s, &mut rng) {
            Ok(t) if t > b => hits += 1,
            Ok(_) => {}
            Err(e) => {
                return CheckResult::new(format!("exit_time_law.{name}"), false, e.to_string())
            }
        }
    }
    let (ok, freq) = within_3_sigma(hits, n, expected);
    CheckResult::new(
        format!("exit_time_law.{name}"),
        ok,
        format!("freq={freq:.5} expected={expected:.5}"),
    )
}

fn grid_checks() -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut sum_err: f64 = 0.0;
    let mut product_err: f64 = 0.0;
    let mut solver_err: f64 = 0.0;
    let mut failure = None;
    for k in [1, 2, 4, 8, 16] {
        for delta in [0.25, 0.01] {
            let grid = match make_optimal_linear_grid(k, delta) {
                Ok(g) => g,
                Err(e) => {
                    failure = Some(e.to_string());
                    continue;
                }
            };
            let widths = grid.widths();
            sum_err = sum_err.max((widths.iter().sum::<f64>() - (1.0 - delta)).abs());
            let c = delta.powf(-1.0 / k as f64) - 1.0;
            for (i, w) in widths.iter().enumerate() {
                let ratio = w / (1.0 - grid.points()[i + 1]);
                product_err = product_err.max(((ratio - c) / c).abs());
            }
            match constant_product_grid(
                &RateBoundProfile::new(TimeSchedule::Linear, delta),
                k,
                delta,
            ) {
                Ok(solved) => {
                    for (p, q) in solved.points().iter().zip(grid.points()) {
                        solver_err = solver_err.max((p - q).abs());
                    }
                }
                Err(e) => failure = Some(e.to_string()),
            }
        }
    }
    out.push(CheckResult::new(
        "grid_width_sum",
        sum_err <= 1e-12,
        format!("max_err={sum_err:.3e}"),
    ));
    out.push(CheckResult::new(
        "grid_constant_product",
        product_err <= 1e-9,
        format!("max_rel_err={product_err:.3e}"),
    ));
    out.push(CheckResult::new(
        "grid_solver_matches_closed_form",
        solver_err <= 1e-9 && failure.is_none(),
        failure.unwrap_or_else(|| format!("max_err={solver_err:.3e}")),
    ));
    let uniform = make_uniform_grid(2, 0.5)
        .map(|g| g.points().to_vec())
        .unwrap_or_default();
    let ok = uniform == [0.0, 0.25, 0.5];
    let shown: Vec<String> = uniform.iter().map(f64::to_string).collect();
    out.push(CheckResult::new(
        "grid_uniform",
        ok,
        format!("points={}", shown.join(";")),
    ));
    out
}

/// One-coordinate masked path; from the mask the posterior mass off the
/// current token is 1, so a sampler's stay frequency can be read off.
fn single_coordinate_spec(
    kind: SamplerKind,
    k: usize,
) -> crate::Result<(SamplerSpec, MixturePath)> {
    let space = StateSpace::new(1, 2)?;
    let table = JointTable::new(space, vec![0.3, 0.7])?;
    let path = MixturePath::new(TimeSchedule::Linear, SourceSpec::Masked, table)?;
    let post = Arc::new(ExactPosterior::new(Arc::new(path.clone())));
    let grid = make_uniform_grid(k, 0.01)?;
    Ok((SamplerSpec::new(kind, grid, post), path))
}

fn sampler_survival_checks() -> Vec<CheckResult> {
    let n = 100_000;
    let mut out = Vec::new();
    for kind in [
        SamplerKind::Euler,
        SamplerKind::TimeCorrected,
        SamplerKind::LocationCorrected,
    ] {
        let result = (|| -> crate::Result<CheckResult> {
            let (spec, path) = single_coordinate_spec(kind, 3)?;
            let x = State::new(vec![2]);
            let (a, b) = spec.grid.interval(2);
            let expected = match kind {
                SamplerKind::Euler => (-(b - a) / (1.0 - a)).exp(),
                _ => survival_power(&TimeSchedule::Linear, a, b, 1.0),
            };
            let mut hits = 0;
            for i in 0..n {
                let step = sampler_step(&spec, &path, &x, 2, TrajectoryKey::new(0x5a, i))?;
                hits += usize::from(step.state == x);
            }
            let (ok, freq) = within_3_sigma(hits, n as usize, expected);
            Ok(CheckResult::new(
                format!("stay_law.{}", kind.name()),
                ok,
                format!("freq={freq:.5} expected={expected:.5}"),
            ))
        })();
        out.push(result.unwrap_or_else(|e| {
            CheckResult::new(format!("stay_law.{}", kind.name()), false, e.to_string())
        }));
    }
    out
}

fn posterior_checks() -> Vec<CheckResult> {
    let mut out = Vec::new();
    let result = (|| -> crate::Result<(f64, bool)> {
        let table = blockwise_ar1(3, 5)?;
        let uniform = MixturePath::new(TimeSchedule::Cosine, SourceSpec::Uniform, table.clone())?;
        let mut rng = keyed_stream(&[0x9057]);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let t = rng.random_range(0.0..0.99);
            let x = State::new((0..3).map(|_| rng.random_range(0..5)).collect());
            let post = uniform.exact_posterior(t, &x)?;
            for d in 0..3 {
                let row = post.row(d);
                worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    worst = f64::INFINITY;
                }
            }
        }
        let masked = MixturePath::new(TimeSchedule::Linear, SourceSpec::Masked, table)?;
        let x = State::new(vec![5, 1, 5]);
        let same =
            masked.exact_posterior(0.2, &x)?.probs() == masked.exact_posterior(0.7, &x)?.probs();
        Ok((worst, same))
    })();
    match result {
        Ok((worst, same)) => {
            out.push(CheckResult::new(
                "posterior_rows_normalized",
                worst <= 1e-12,
                format!("max_err={worst:.3e}"),
            ));
            out.push(CheckResult::new(
                "posterior_masked_time_independent",
                same,
                format!("bit_identical={same}"),
            ));
        }
        Err(e) => out.push(CheckResult::new("posterior_sanity", false, e.to_string())),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_suite_passes() {
        let results = run_checks();
        for r in &results {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn lines_follow_grammar() {
        for r in run_schedule_checks(&[("linear", &TimeSchedule::Linear)]) {
            let line = r.to_string();
            let mut parts = line.splitn(4, ' ');
            assert_eq!(parts.next(), Some("CHECK"));
            assert!(!parts.next().unwrap().contains(' '));
            assert!(matches!(parts.next(), Some("PASS") | Some("FAIL")));
        }
    }

    #[derive(Debug)]
    struct WrongDerivative;

    impl Schedule for WrongDerivative {
        fn kappa(&self, t: f64) -> f64 {
            TimeSchedule::Cosine.kappa(t)
        }
        fn kappa_dot(&self, t: f64) -> f64 {
            // Missing the factor π/2.
            (std::f64::consts::PI * t).sin()
        }
        fn kappa_inv(&self, u: f64) -> f64 {
            TimeSchedule::Cosine.kappa_inv(u)
        }
        fn name(&self) -> &str {
            "wrong"
        }
    }

    #[test]
    fn injected_derivative_bug_is_caught() {
        let results = run_schedule_checks(&[("wrong", &WrongDerivative)]);
        let fd = results
            .iter()
            .find(|r| r.name == "kappa_dot_fd.wrong")
            .unwrap();
        assert!(!fd.passed);
    }
}
