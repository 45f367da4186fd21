use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::path::{MixturePath, PosteriorEval};
use crate::samplers::SamplerKind;
use crate::schedule::{rate_factor, survival_power};
use crate::space::{State, StateSpace};

/// Largest joint state space the oracle will enumerate.
const ORACLE_BUDGET: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    /// Gauss-Legendre nodes for the location-corrected exit-time integral.
    pub quad_points: usize,
    /// Per-coordinate cap on the total Poisson count for tau-leaping.
    pub poisson_cap: u32,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            quad_points: 200,
            poisson_cap: 6,
        }
    }
}

/// Exact one-step law over the working state space, indexed by
/// [`StateSpace::encode`].
#[derive(Debug, Clone, PartialEq)]
pub struct KernelOracle {
    pub space: StateSpace,
    pub probs: Vec<f64>,
    /// Probability mass dropped by Poisson truncation (tau-leaping only).
    pub tail: f64,
    /// `|1 − quadrature mass|` of the exit-time integral (location-corrected
    /// only).
    pub quadrature_residual: f64,
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Per-coordinate law of the frozen-posterior update that stays with
/// probability `stay(λ^d)` and otherwise jumps proportionally to the
/// posterior.
fn parallel_laws(post: &PosteriorEval, width: usize, stay: impl Fn(f64) -> f64) -> Vec<Vec<f64>> {
    (0..post.dims())
        .map(|d| {
            let current = post.x.get(d);
            let mut law = vec![0.0; width];
            let mass = post.off_mass(d);
            if mass <= 0.0 {
                law[current] = 1.0;
                return law;
            }
            let s = stay(mass);
            law[current] = s;
            for (z, &p) in post.row(d).iter().enumerate() {
                if z != current {
                    law[z] += (1.0 - s) * p / mass;
                }
            }
            law
        })
        .collect()
}

fn product(laws: &[Vec<f64>], width: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    for law in laws {
        let mut next = vec![0.0; out.len() * width];
        for (i, &p) in out.iter().enumerate() {
            for (z, &q) in law.iter().enumerate() {
                next[i * width + z] = p * q;
            }
        }
        out = next;
    }
    out
}

fn poisson_pmf(n: u32, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    (n as f64 * mean.ln() - mean - (1..=n).map(|i| (i as f64).ln()).sum::<f64>()).exp()
}

/// Enumerates Poisson count vectors over `targets` with total at most `cap`,
/// calling `visit(shift, prob)` with the integer displacement of each.
fn enumerate_counts(
    targets: &[(i64, f64)],
    cap: u32,
    shift: i64,
    prob: f64,
    visit: &mut impl FnMut(i64, f64),
) {
    let Some((&(delta, mean), rest)) = targets.split_first() else {
        visit(shift, prob);
        return;
    };
    for n in 0..=cap {
        let p = poisson_pmf(n, mean);
        enumerate_counts(rest, cap - n, shift + delta * n as i64, prob * p, visit);
    }
}

fn tau_laws(
    post: &PosteriorEval,
    scale: f64,
    vocab: usize,
    width: usize,
    cap: u32,
) -> (Vec<Vec<f64>>, f64) {
    let mut kept = 1.0;
    let laws = (0..post.dims())
        .map(|d| {
            let current = post.x.get(d);
            let targets: Vec<(i64, f64)> = post
                .row(d)
                .iter()
                .enumerate()
                .filter(|&(z, &p)| z != current && p > 0.0)
                .map(|(z, &p)| (z as i64 - current as i64, scale * p))
                .collect();
            let mut law = vec![0.0; width];
            let mut total = 0.0;
            enumerate_counts(&targets, cap, 0, 1.0, &mut |shift, p| {
                let landed = current as i64 + shift;
                let out = if shift != 0 && (0..vocab as i64).contains(&landed) {
                    landed as usize
                } else {
                    current
                };
                law[out] += p;
                total += p;
            });
            kept *= total;
            law
        })
        .collect();
    (laws, (1.0 - kept).max(0.0))
}

/// Exact law of one step of `kind` from `x_prev` over interval `k` of
/// `grid`, using the exact posterior of `path`.
pub fn one_step_kernel_oracle(
    kind: SamplerKind,
    path: &MixturePath,
    x_prev: &State,
    grid: &TimeGrid,
    k: usize,
    options: OracleOptions,
) -> Result<KernelOracle> {
    let space = path.space();
    space.check_state(x_prev)?;
    if space.num_states().is_none_or(|n| n > ORACLE_BUDGET) {
        return Err(Error::Capability(format!(
            "one-step oracle limited to {ORACLE_BUDGET} states"
        )));
    }
    if !(1..=grid.steps()).contains(&k) {
        return Err(Error::domain(format!(
            "step {k} outside 1..={}",
            grid.steps()
        )));
    }
    let (a, b) = grid.interval(k);
    let schedule = path.schedule();
    let width = space.working_vocab();
    let post = path.exact_posterior(a, x_prev)?;
    let mut tail = 0.0;
    let mut quadrature_residual = 0.0;

    let probs = match kind {
        SamplerKind::Euler => {
            let scale = (b - a) * rate_factor(&schedule, a)?;
            product(&parallel_laws(&post, width, |m| (-scale * m).exp()), width)
        }
        SamplerKind::TimeCorrected => product(
            &parallel_laws(&post, width, |m| survival_power(&schedule, a, b, m)),
            width,
        ),
        SamplerKind::TauLeaping => {
            let scale = (b - a) * rate_factor(&schedule, a)?;
            let (laws, dropped) = tau_laws(&post, scale, space.vocab(), width, options.poisson_cap);
            tail = dropped;
            product(&laws, width)
        }
        SamplerKind::LocationCorrected => {
            let lambda: f64 = (0..post.dims()).map(|d| post.off_mass(d)).sum();
            let mut probs = vec![0.0; width.pow(x_prev.len() as u32)];
            probs[space.encode(x_prev)] = survival_power(&schedule, a, b, lambda);
            if lambda > 0.0 {
                let (nodes, weights) = gauss_legendre(options.quad_points);
                let mut mass = survival_power(&schedule, a, b, lambda);
                for (node, w) in nodes.iter().zip(&weights) {
                    let t = a + (b - a) * (node + 1.0) / 2.0;
                    let density = lambda
                        * rate_factor(&schedule, t)?
                        * survival_power(&schedule, a, t, lambda);
                    let weight = w * (b - a) / 2.0 * density;
                    mass += weight;
                    for d in 0..post.dims() {
                        let current = x_prev.get(d);
                        for (z, &p) in post.row(d).iter().enumerate() {
                            if z == current || p <= 0.0 {
                                continue;
                            }
                            let mut mid = x_prev.clone();
                            mid.set(d, z);
                            let second = path.exact_posterior(t, &mid)?;
                            let laws = parallel_laws(&second, width, |m| {
                                survival_power(&schedule, t, b, m)
                            });
                            let scale = weight * p / lambda;
                            for (slot, q) in probs.iter_mut().zip(product(&laws, width)) {
                                *slot += scale * q;
                            }
                        }
                    }
                }
                quadrature_residual = (1.0 - mass).abs();
            }
            probs
        }
        other => {
            return Err(Error::config(format!(
                "no one-step oracle for sampler {other}"
            )));
        }
    };
    Ok(KernelOracle {
        space,
        probs,
        tail,
        quadrature_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{JointTable, SourceSpec};
    use crate::grid::make_uniform_grid;
    use crate::schedule::TimeSchedule;

    fn toy(source: SourceSpec) -> MixturePath {
        let space = StateSpace::new(2, 3).unwrap();
        let probs = vec![0.2, 0.05, 0.05, 0.1, 0.15, 0.05, 0.1, 0.1, 0.2];
        MixturePath::new(
            TimeSchedule::Linear,
            source,
            JointTable::new(space, probs).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_exactly() {
        let quad = |n: usize, f: &dyn Fn(f64) -> f64| {
            let (x, w) = gauss_legendre(n);
            x.iter().zip(&w).map(|(x, w)| w * f(*x)).sum::<f64>()
        };
        assert!((quad(1, &|_| 1.0) - 2.0).abs() < 1e-15);
        // Degree 2n − 1 is exact.
        assert!((quad(5, &|x| x.powi(8)) - 2.0 / 9.0).abs() < 1e-14);
        assert!((quad(5, &|x| x.powi(9))).abs() < 1e-14);
        assert!((quad(200, &f64::cos) - 2.0 * 1f64.sin()).abs() < 1e-13);
        assert!((quad(200, &|_| 1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kernels_are_normalized() {
        let path = toy(SourceSpec::Uniform);
        let grid = make_uniform_grid(4, 0.01).unwrap();
        let x = State::new(vec![1, 2]);
        for kind in [
            SamplerKind::Euler,
            SamplerKind::TimeCorrected,
            SamplerKind::LocationCorrected,
        ] {
            let o = one_step_kernel_oracle(kind, &path, &x, &grid, 2, OracleOptions::default())
                .unwrap();
            assert!((o.probs.iter().sum::<f64>() - 1.0).abs() < 1e-10, "{kind}");
        }
        let o = one_step_kernel_oracle(
            SamplerKind::TauLeaping,
            &path,
            &x,
            &grid,
            2,
            OracleOptions::default(),
        )
        .unwrap();
        assert!((o.probs.iter().sum::<f64>() + o.tail - 1.0).abs() < 1e-12);
        assert!(o.tail < 1e-6);
    }

    #[test]
    fn zero_mass_gives_identity() {
        let path = toy(SourceSpec::Masked);
        let grid = make_uniform_grid(3, 0.01).unwrap();
        let x = State::new(vec![2, 0]);
        let o = one_step_kernel_oracle(
            SamplerKind::TimeCorrected,
            &path,
            &x,
            &grid,
            2,
            OracleOptions::default(),
        )
        .unwrap();
        let idx = path.space().encode(&x);
        assert_eq!(o.probs[idx], 1.0);
        assert_eq!(o.probs.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn location_quadrature_self_converges() {
        let space = StateSpace::new(2, 2).unwrap();
        let table = JointTable::new(space, vec![0.4, 0.1, 0.2, 0.3]).unwrap();
        let path = MixturePath::new(TimeSchedule::Linear, SourceSpec::Uniform, table).unwrap();
        let grid = make_uniform_grid(2, 0.01).unwrap();
        let x = State::new(vec![0, 1]);
        let run = |n| {
            let opts = OracleOptions {
                quad_points: n,
                ..Default::default()
            };
            one_step_kernel_oracle(SamplerKind::LocationCorrected, &path, &x, &grid, 2, opts)
                .unwrap()
        };
        let (lo, hi) = (run(100), run(400));
        let diff = lo
            .probs
            .iter()
            .zip(&hi.probs)
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-8, "diff {diff}");
        assert!(hi.quadrature_residual < 1e-10);
    }

    #[test]
    fn rejects_large_spaces() {
        let space = StateSpace::new(6, 8).unwrap();
        let table = crate::distributions::blockwise_ar1(6, 8).unwrap();
        let path = MixturePath::new(TimeSchedule::Linear, SourceSpec::Uniform, table).unwrap();
        let grid = make_uniform_grid(2, 0.01).unwrap();
        let x = State::new(vec![0; space.dims()]);
        assert!(matches!(
            one_step_kernel_oracle(
                SamplerKind::Euler,
                &path,
                &x,
                &grid,
                1,
                OracleOptions::default()
            ),
            Err(Error::Capability(_))
        ));
    }
}
