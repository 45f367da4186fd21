//! The mixture probability path and its exact oracles.
//!
//! Coordinate-wise, `p_{t|1}^d(x^d | x₁^d) = (1 − κ_t)·p₀^d(x^d) + κ_t·δ_{x₁^d}(x^d)`
//! and the conditional rate is `κ̇_t/(1 − κ_t)·(δ_{x₁^d}(z^d) − δ_{x^d}(z^d))`.
//! Averaging the conditional rate over the posterior `p_{1|t}^d(·|x)` gives
//! the oracle rate that every sampler approximates.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use rand_distr::{Distribution, StandardNormal};

use crate::distributions::{
    check_coords, source_pmf_unchecked, FactoredJoint, SourceSpec, SubcubePmf,
};
use crate::error::{Error, Result};
use crate::rng::keyed_stream;
use crate::schedule::{rate_factor, Schedule, TimeSchedule};
use crate::space::{checked_pow, State, StateSpace};

/// Largest sub-cube an exact marginal may materialize.
pub const EXACT_BUDGET: usize = 10_000_000;

/// Memo tables are only built for blocks with at most this many states.
const MEMO_BUDGET: usize = 1 << 20;

#[derive(Debug, Clone)]
struct BlockSupport {
    coords: std::ops::Range<usize>,
    /// Flattened tokens of every positive-mass block state.
    tokens: Vec<u32>,
    probs: Vec<f64>,
}

/// Mixture path from a source `p₀` to a data distribution `p₁`.
#[derive(Debug, Clone)]
pub struct MixturePath {
    space: StateSpace,
    schedule: TimeSchedule,
    source: SourceSpec,
    data: FactoredJoint,
    support: Vec<BlockSupport>,
}

impl MixturePath {
    pub fn new(
        schedule: TimeSchedule,
        source: SourceSpec,
        data: impl Into<FactoredJoint>,
    ) -> Result<Self> {
        let data = data.into();
        let space = source.space(data.dims(), data.vocab())?;
        let support = (0..data.blocks().len())
            .map(|b| {
                let table = &data.blocks()[b];
                let mut tokens = Vec::new();
                let mut probs = Vec::new();
                for (i, &p) in table.probs().iter().enumerate() {
                    if p > 0.0 {
                        tokens.extend(table.decode(i).tokens().iter().map(|&t| t as u32));
                        probs.push(p);
                    }
                }
                BlockSupport {
                    coords: data.block_range(b),
                    tokens,
                    probs,
                }
            })
            .collect();
        Ok(Self {
            space,
            schedule,
            source,
            data,
            support,
        })
    }

    /// Working state space (includes the mask token for a masked source).
    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn schedule(&self) -> TimeSchedule {
        self.schedule
    }

    pub fn source(&self) -> &SourceSpec {
        &self.source
    }

    pub fn data(&self) -> &FactoredJoint {
        &self.data
    }

    fn check_time(t: f64) -> Result<()> {
        if (0.0..=1.0).contains(&t) {
            Ok(())
        } else {
            Err(Error::domain(format!("time {t} outside [0, 1]")))
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d < self.space.dims() {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "dimension {d} out of range for D = {}",
                self.space.dims()
            )))
        }
    }

    #[inline]
    fn kernel(&self, kappa: f64, d: usize, x: usize, x1: usize) -> f64 {
        (1.0 - kappa) * source_pmf_unchecked(&self.source, &self.space, d, x)
            + if x == x1 { kappa } else { 0.0 }
    }

    /// `p_{t|1}^d(x | x₁)`.
    pub fn conditional_path_prob(&self, t: f64, d: usize, x: usize, x1: usize) -> Result<f64> {
        Self::check_time(t)?;
        self.check_dim(d)?;
        self.space.check_token(x)?;
        if !self.space.is_data_token(x1) {
            return Err(Error::domain(format!(
                "target token {x1} is not a data token"
            )));
        }
        Ok(self.kernel(self.schedule.kappa(t), d, x, x1))
    }

    /// `Q_t^d(x, z | x₁)` for the mixture path.
    pub fn conditional_rate(&self, t: f64, d: usize, x: usize, z: usize, x1: usize) -> Result<f64> {
        self.check_dim(d)?;
        self.space.check_token(x)?;
        self.space.check_token(z)?;
        if !self.space.is_data_token(x1) {
            return Err(Error::domain(format!(
                "target token {x1} is not a data token"
            )));
        }
        let factor = rate_factor(&self.schedule, t)?;
        Ok(factor * (f64::from(u8::from(z == x1)) - f64::from(u8::from(z == x))))
    }

    /// Exact marginal `p_t` on `coords` over the working vocabulary.
    pub fn exact_marginal(&self, t: f64, coords: &[usize]) -> Result<SubcubePmf> {
        Self::check_time(t)?;
        check_coords(coords, self.space.dims())?;
        let width = self.space.working_vocab();
        if checked_pow(width, coords.len()).is_none_or(|n| n > EXACT_BUDGET) {
            return Err(Error::Capability(format!(
                "exact marginal over {width}^{} states exceeds budget {EXACT_BUDGET}",
                coords.len()
            )));
        }
        let data = self.data.marginal(coords)?;
        let vocab = self.space.vocab();
        let kappa = self.schedule.kappa(t);

        // Push the data marginal through the per-coordinate kernel one axis
        // at a time: axis i changes radix from |S| to the working width.
        let mut radices = vec![vocab; coords.len()];
        let mut probs = data.probs;
        for (axis, &d) in coords.iter().enumerate() {
            let outer: usize = radices[..axis].iter().product();
            let inner: usize = radices[axis + 1..].iter().product();
            let mut next = vec![0.0; outer * width * inner];
            for o in 0..outer {
                for a in 0..vocab {
                    let src = &probs[(o * vocab + a) * inner..(o * vocab + a + 1) * inner];
                    if src.iter().all(|&p| p == 0.0) {
                        continue;
                    }
                    for x in 0..width {
                        let k = self.kernel(kappa, d, x, a);
                        if k == 0.0 {
                            continue;
                        }
                        let dst = &mut next[(o * width + x) * inner..(o * width + x + 1) * inner];
                        for (out, &p) in dst.iter_mut().zip(src) {
                            *out += k * p;
                        }
                    }
                }
            }
            radices[axis] = width;
            probs = next;
        }
        Ok(SubcubePmf {
            coords: coords.to_vec(),
            radix: width,
            probs,
        })
    }

    /// Posterior rows of one block, written into `rows` (block coords × |S|).
    fn block_posterior(&self, b: usize, kappa: f64, x: &State, rows: &mut [f64]) -> Result<()> {
        let block = &self.support[b];
        let m = block.coords.len();
        let vocab = self.space.vocab();
        // Factor of each coordinate relative to its largest value (the match
        // factor), so weights stay in [0, p₁] and the common scale cancels.
        let mut ratio = vec![0.0; m];
        let mut observed = vec![0u32; m];
        for (i, d) in block.coords.clone().enumerate() {
            let xd = x.get(d);
            let base = (1.0 - kappa) * source_pmf_unchecked(&self.source, &self.space, d, xd);
            let matched = base + if xd < vocab { kappa } else { 0.0 };
            if matched <= 0.0 {
                return Err(Error::Unreachable {
                    t: f64::NAN,
                    state: x.tokens().to_vec(),
                });
            }
            ratio[i] = base / matched;
            observed[i] = xd as u32;
        }

        rows.iter_mut().for_each(|r| *r = 0.0);
        let mut total = 0.0;
        for (entry, &p) in block.tokens.chunks_exact(m).zip(&block.probs) {
            let mut w = p;
            for i in 0..m {
                if entry[i] != observed[i] {
                    w *= ratio[i];
                }
            }
            if w == 0.0 {
                continue;
            }
            total += w;
            for i in 0..m {
                rows[i * vocab + entry[i] as usize] += w;
            }
        }
        if total.is_nan() || total <= f64::MIN_POSITIVE {
            return self.block_posterior_log(b, kappa, x, rows);
        }
        rows.iter_mut().for_each(|r| *r /= total);
        Ok(())
    }

    /// Log-sum-exp fallback for weights too small for linear space.
    fn block_posterior_log(&self, b: usize, kappa: f64, x: &State, rows: &mut [f64]) -> Result<()> {
        let block = &self.support[b];
        let m = block.coords.len();
        let vocab = self.space.vocab();
        let logs: Vec<f64> = block
            .tokens
            .chunks_exact(m)
            .zip(&block.probs)
            .map(|(entry, &p)| {
                block
                    .coords
                    .clone()
                    .enumerate()
                    .fold(p.ln(), |acc, (i, d)| {
                        acc + self.kernel(kappa, d, x.get(d), entry[i] as usize).ln()
                    })
            })
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::Unreachable {
                t: f64::NAN,
                state: x.tokens().to_vec(),
            });
        }
        rows.iter_mut().for_each(|r| *r = 0.0);
        let mut total = 0.0;
        for (entry, lw) in block.tokens.chunks_exact(m).zip(&logs) {
            let w = (lw - max).exp();
            total += w;
            for i in 0..m {
                rows[i * vocab + entry[i] as usize] += w;
            }
        }
        rows.iter_mut().for_each(|r| *r /= total);
        Ok(())
    }

    /// Exact per-coordinate posterior `p_{1|t}^d(·|x)`, computed blockwise.
    pub fn exact_posterior(&self, t: f64, x: &State) -> Result<PosteriorEval> {
        if !(0.0..1.0).contains(&t) {
            return Err(Error::domain(format!("posterior time {t} outside [0, 1)")));
        }
        self.space.check_state(x)?;
        let kappa = self.schedule.kappa(t);
        let vocab = self.space.vocab();
        let mut probs = vec![0.0; self.space.dims() * vocab];
        for b in 0..self.support.len() {
            let r = self.support[b].coords.clone();
            self.block_posterior(b, kappa, x, &mut probs[r.start * vocab..r.end * vocab])
                .map_err(|e| with_time(e, t))?;
        }
        Ok(PosteriorEval {
            t,
            x: x.clone(),
            vocab,
            probs,
        })
    }

    /// Oracle rate table `Q_t^d(x, z)`, one row per coordinate over the
    /// working vocabulary, with diagonal entries making rows sum to zero.
    pub fn oracle_rate(&self, t: f64, x: &State) -> Result<RateTable> {
        let factor = rate_factor(&self.schedule, t)?;
        let post = self.exact_posterior(t, x)?;
        Ok(RateTable::from_posterior(
            &post,
            factor,
            self.space.working_vocab(),
        ))
    }
}

fn with_time(e: Error, t: f64) -> Error {
    match e {
        Error::Unreachable { state, .. } => Error::Unreachable { t, state },
        other => other,
    }
}

/// Per-coordinate posteriors at `(t, x)`: row `d` is `p_{1|t}^d(·|x)` over
/// the data vocabulary. The mask token never carries posterior mass.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorEval {
    pub t: f64,
    pub x: State,
    vocab: usize,
    probs: Vec<f64>,
}

impl PosteriorEval {
    pub fn from_rows(t: f64, x: State, vocab: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != x.len() * vocab {
            return Err(Error::domain(format!(
                "posterior has {} entries, expected {} x {vocab}",
                probs.len(),
                x.len()
            )));
        }
        Ok(Self { t, x, vocab, probs })
    }

    /// Point mass at the current token of every coordinate.
    pub fn point_mass(t: f64, x: State, vocab: usize) -> Self {
        let mut probs = vec![0.0; x.len() * vocab];
        for (d, &tok) in x.tokens().iter().enumerate() {
            if tok < vocab {
                probs[d * vocab + tok] = 1.0;
            }
        }
        Self { t, x, vocab, probs }
    }

    pub fn dims(&self) -> usize {
        self.x.len()
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    #[inline]
    pub fn row(&self, d: usize) -> &[f64] {
        &self.probs[d * self.vocab..(d + 1) * self.vocab]
    }

    /// `p_{1|t}^d(z|x)`; zero for the mask token.
    #[inline]
    pub fn prob(&self, d: usize, z: usize) -> f64 {
        if z < self.vocab {
            self.probs[d * self.vocab + z]
        } else {
            0.0
        }
    }

    /// `λ^d = Σ_{z ≠ x^d} p_{1|t}^d(z|x)`.
    #[inline]
    pub fn off_mass(&self, d: usize) -> f64 {
        let current = self.x.get(d);
        self.row(d)
            .iter()
            .enumerate()
            .filter(|&(z, _)| z != current)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub(crate) fn probs_mut(&mut self) -> &mut [f64] {
        &mut self.probs
    }
}

/// Rate table over the working vocabulary, row-major by coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    width: usize,
    rates: Vec<f64>,
}

impl RateTable {
    pub fn from_posterior(post: &PosteriorEval, factor: f64, width: usize) -> Self {
        let dims = post.dims();
        let mut rates = vec![0.0; dims * width];
        for d in 0..dims {
            let current = post.x.get(d);
            let row = &mut rates[d * width..(d + 1) * width];
            let mut out = 0.0;
            for (z, slot) in row.iter_mut().enumerate() {
                if z != current {
                    *slot = factor * post.prob(d, z);
                    out += *slot;
                }
            }
            row[current] = -out;
        }
        Self { width, rates }
    }

    pub fn row(&self, d: usize) -> &[f64] {
        &self.rates[d * self.width..(d + 1) * self.width]
    }

    pub fn rate(&self, d: usize, z: usize) -> f64 {
        self.rates[d * self.width + z]
    }

    /// Total outflow `−Q_t(x, x)`.
    pub fn outflow(&self) -> f64 {
        self.rates
            .chunks_exact(self.width)
            .map(|row| row.iter().filter(|&&r| r > 0.0).sum::<f64>())
            .sum()
    }
}

/// Source of per-coordinate posteriors consumed by the samplers.
pub trait PosteriorModel: Send + Sync {
    fn space(&self) -> StateSpace;

    /// One function evaluation; increments the NFE counter by one.
    fn evaluate(&self, t: f64, x: &State) -> Result<PosteriorEval>;

    /// Evaluations issued so far.
    fn nfe_count(&self) -> u64;

    /// True when `evaluate(t, x)` does not depend on `t`.
    fn time_independent(&self) -> bool {
        false
    }
}

/// Per-block posterior rows keyed by the block's token pattern.
type BlockMemo = Vec<OnceLock<Arc<[f64]>>>;

/// The exact posterior of a [`MixturePath`].
///
/// For a masked source the posterior does not depend on time, and results
/// are memoized per block keyed by the block's token pattern.
#[derive(Debug)]
pub struct ExactPosterior {
    path: Arc<MixturePath>,
    nfe: AtomicU64,
    memo: Option<Vec<BlockMemo>>,
}

impl ExactPosterior {
    pub fn new(path: Arc<MixturePath>) -> Self {
        let memo = path.source.is_masked().then(|| {
            let width = path.space.working_vocab();
            path.support
                .iter()
                .map(|block| match checked_pow(width, block.coords.len()) {
                    Some(n) if n <= MEMO_BUDGET => (0..n).map(|_| OnceLock::new()).collect(),
                    _ => Vec::new(),
                })
                .collect()
        });
        Self {
            path,
            nfe: AtomicU64::new(0),
            memo,
        }
    }

    pub fn path(&self) -> &Arc<MixturePath> {
        &self.path
    }

    fn evaluate_memo(
        &self,
        memo: &[Vec<OnceLock<Arc<[f64]>>>],
        t: f64,
        x: &State,
    ) -> Result<PosteriorEval> {
        let path = &self.path;
        let vocab = path.space.vocab();
        let width = path.space.working_vocab();
        let mut probs = vec![0.0; path.space.dims() * vocab];
        for (b, block) in path.support.iter().enumerate() {
            let r = block.coords.clone();
            let out = &mut probs[r.start * vocab..r.end * vocab];
            if memo[b].is_empty() {
                path.block_posterior(b, 0.5, x, out)
                    .map_err(|e| with_time(e, t))?;
                continue;
            }
            let key = x.tokens()[r.clone()]
                .iter()
                .fold(0, |acc, &tok| acc * width + tok);
            let cell = &memo[b][key];
            let rows = match cell.get() {
                Some(rows) => rows.clone(),
                None => {
                    // Any interior time gives the same rows for a masked source.
                    let mut rows = vec![0.0; out.len()];
                    path.block_posterior(b, 0.5, x, &mut rows)
                        .map_err(|e| with_time(e, t))?;
                    cell.get_or_init(|| rows.into()).clone()
                }
            };
            out.copy_from_slice(&rows);
        }
        Ok(PosteriorEval {
            t,
            x: x.clone(),
            vocab,
            probs,
        })
    }
}

impl PosteriorModel for ExactPosterior {
    fn space(&self) -> StateSpace {
        self.path.space
    }

    fn evaluate(&self, t: f64, x: &State) -> Result<PosteriorEval> {
        self.nfe.fetch_add(1, Ordering::Relaxed);
        match &self.memo {
            Some(memo) => {
                if !(0.0..1.0).contains(&t) {
                    return Err(Error::domain(format!("posterior time {t} outside [0, 1)")));
                }
                self.path.space.check_state(x)?;
                self.evaluate_memo(memo, t, x)
            }
            None => self.path.exact_posterior(t, x),
        }
    }

    fn nfe_count(&self) -> u64 {
        self.nfe.load(Ordering::Relaxed)
    }

    fn time_independent(&self) -> bool {
        self.path.source.is_masked()
    }
}

/// Wraps a model and adds i.i.d. Gaussian noise of scale `σ` to the
/// log-probabilities of every row before renormalizing.
///
/// The noise is a deterministic function of `(seed, t, x)`; when the inner
/// model is time-independent the time is left out of the key so the wrapper
/// stays time-independent too.
pub struct PerturbedPosterior {
    inner: Arc<dyn PosteriorModel>,
    sigma: f64,
    seed: u64,
    nfe: AtomicU64,
}

impl PerturbedPosterior {
    pub fn new(inner: Arc<dyn PosteriorModel>, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::config(format!(
                "noise scale {sigma} must be finite and >= 0"
            )));
        }
        Ok(Self {
            inner,
            sigma,
            seed,
            nfe: AtomicU64::new(0),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl std::fmt::Debug for PerturbedPosterior {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PerturbedPosterior")
            .field("sigma", &self.sigma)
            .field("seed", &self.seed)
            .finish()
    }
}

impl PosteriorModel for PerturbedPosterior {
    fn space(&self) -> StateSpace {
        self.inner.space()
    }

    fn evaluate(&self, t: f64, x: &State) -> Result<PosteriorEval> {
        self.nfe.fetch_add(1, Ordering::Relaxed);
        let mut eval = self.inner.evaluate(t, x)?;
        if self.sigma == 0.0 {
            return Ok(eval);
        }
        let mut words = vec![
            self.seed,
            if self.inner.time_independent() {
                0
            } else {
                t.to_bits()
            },
        ];
        words.extend(x.tokens().iter().map(|&tok| tok as u64));
        let mut rng = keyed_stream(&words);
        let vocab = eval.vocab();
        for row in eval.probs_mut().chunks_exact_mut(vocab) {
            let mut logits: Vec<f64> = row
                .iter()
                .map(|&p| {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    if p > 0.0 {
                        p.ln() + self.sigma * noise
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for l in logits.iter_mut() {
                *l = (*l - max).exp();
                total += *l;
            }
            for (p, l) in row.iter_mut().zip(&logits) {
                *p = l / total;
            }
        }
        Ok(eval)
    }

    fn nfe_count(&self) -> u64 {
        self.nfe.load(Ordering::Relaxed)
    }

    fn time_independent(&self) -> bool {
        self.inner.time_independent()
    }
}
