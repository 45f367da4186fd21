//! Data distributions `p₁` over `S^D` and source distributions `p₀`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::space::{checked_pow, decode_radix, encode_radix, State, StateSpace};

/// Largest dense table the engine materializes.
pub const DENSE_BUDGET: usize = 10_000_000;

const MASS_TOL: f64 = 1e-12;

/// Explicit pmf over `S^D`, indexed by the mixed-radix encoding of the state
/// (most-significant dimension first, mask excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    space: StateSpace,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn new(space: StateSpace, probs: Vec<f64>) -> Result<Self> {
        let space = space.without_mask();
        let expected = dense_len(&space)?;
        if probs.len() != expected {
            return Err(Error::config(format!(
                "joint table has {} entries, expected {expected}",
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::config(format!(
                "joint table entry {p} is not a probability"
            )));
        }
        let total: f64 = probs.iter().sum();
        // Summation error grows with the table size.
        let tol = MASS_TOL.max(4.0 * f64::EPSILON * probs.len() as f64);
        if (total - 1.0).abs() > tol {
            return Err(Error::config(format!("joint table sums to {total}, not 1")));
        }
        Ok(Self { space, probs })
    }

    pub fn point_mass(space: StateSpace, state: &State) -> Result<Self> {
        let space = space.without_mask();
        space.check_state(state)?;
        let mut probs = vec![0.0; dense_len(&space)?];
        probs[space.encode(state)] = 1.0;
        Self::new(space, probs)
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn dims(&self) -> usize {
        self.space.dims()
    }

    pub fn vocab(&self) -> usize {
        self.space.vocab()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, state: &State) -> f64 {
        self.probs[self.space.encode(state)]
    }

    pub fn decode(&self, index: usize) -> State {
        self.space.decode(index)
    }

    /// Text export: a `D vocab` header, then one `index probability` line
    /// per entry.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.dims(), self.vocab());
        for (i, p) in self.probs.iter().enumerate() {
            let _ = writeln!(out, "{i} {p:e}");
        }
        out
    }

    /// Parses the text format written by [`JointTable::to_text`]. Indices not
    /// listed have probability zero.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse("empty joint table file".into()))?;
        let mut fields = header.split_whitespace();
        let mut header_field = |name: &str| -> Result<usize> {
            fields
                .next()
                .ok_or_else(|| Error::Parse(format!("header is missing `{name}`")))?
                .parse()
                .map_err(|e| Error::Parse(format!("header field `{name}`: {e}")))
        };
        let dims = header_field("D")?;
        let vocab = header_field("vocab")?;
        let space = StateSpace::new(dims, vocab)?;
        let mut probs = vec![0.0; dense_len(&space)?];
        for (lineno, line) in lines {
            let mut parts = line.split_whitespace();
            let (Some(idx), Some(p), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Parse(format!(
                    "line {lineno}: expected `state_index probability`"
                )));
            };
            let idx: usize = idx
                .parse()
                .map_err(|e| Error::Parse(format!("line {lineno}: {e}")))?;
            let p: f64 = p
                .parse()
                .map_err(|e| Error::Parse(format!("line {lineno}: {e}")))?;
            let slot = probs.get_mut(idx).ok_or_else(|| {
                Error::Parse(format!("line {lineno}: state index {idx} out of range"))
            })?;
            *slot = p;
        }
        Self::new(space, probs)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn dense_len(space: &StateSpace) -> Result<usize> {
    match checked_pow(space.vocab(), space.dims()) {
        Some(n) if n <= DENSE_BUDGET => Ok(n),
        _ => Err(Error::Capability(format!(
            "dense table of {}^{} entries exceeds budget {DENSE_BUDGET}",
            space.vocab(),
            space.dims()
        ))),
    }
}

/// One AR(1) block of three coordinates over `vocab` tokens.
fn ar1_block_probs(vocab: usize) -> Vec<f64> {
    let v = vocab as f64;
    // Conditional law of the next coordinate given the previous token.
    let transition = |prev: usize, next: usize| -> f64 {
        let guarded = prev >= 2 && prev + 3 <= vocab;
        if guarded {
            let in_window = next + 2 >= prev && next <= prev + 2;
            0.9 * if in_window { 0.2 } else { 0.0 } + 0.1 / v
        } else {
            1.0 / v
        }
    };
    let mut probs = Vec::with_capacity(vocab * vocab * vocab);
    for a in 0..vocab {
        for b in 0..vocab {
            let ab = transition(a, b) / v;
            for c in 0..vocab {
                probs.push(ab * transition(b, c));
            }
        }
    }
    probs
}

fn check_ar1_args(dims: usize, vocab: usize) -> Result<()> {
    if dims == 0 || !dims.is_multiple_of(3) {
        return Err(Error::config(format!(
            "blockwise AR(1) needs D divisible by 3, got {dims}"
        )));
    }
    if vocab < 5 {
        return Err(Error::config(format!(
            "blockwise AR(1) needs vocab >= 5, got {vocab}"
        )));
    }
    Ok(())
}

/// Blockwise AR(1) distribution as a dense table.
///
/// Within each block of three coordinates the first token is uniform; each
/// following token, when its predecessor `a` (1-based) lies in
/// `[3, |S| − 2]`, is drawn from `0.9·U{a−2, …, a+2} + 0.1·U(S)`, otherwise
/// from `U(S)`. Blocks are independent copies.
pub fn blockwise_ar1(dims: usize, vocab: usize) -> Result<JointTable> {
    blockwise_ar1_factored(dims, vocab)?.to_dense()
}

/// Blockwise AR(1) distribution kept in factored form, so exact oracles
/// stay cheap for large `D`.
pub fn blockwise_ar1_factored(dims: usize, vocab: usize) -> Result<FactoredJoint> {
    check_ar1_args(dims, vocab)?;
    let block = JointTable::new(StateSpace::new(3, vocab)?, ar1_block_probs(vocab))?;
    FactoredJoint::new(vec![block; dims / 3])
}

/// Product of independent blocks over consecutive coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredJoint {
    blocks: Vec<JointTable>,
    offsets: Vec<usize>,
    block_of: Vec<usize>,
}

impl FactoredJoint {
    pub fn new(blocks: Vec<JointTable>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::config("factored joint needs at least one block"))?;
        let vocab = first.vocab();
        if blocks.iter().any(|b| b.vocab() != vocab) {
            return Err(Error::config("all blocks must share one vocabulary"));
        }
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut block_of = Vec::new();
        for (i, b) in blocks.iter().enumerate() {
            offsets.push(block_of.len());
            block_of.extend(std::iter::repeat_n(i, b.dims()));
        }
        Ok(Self {
            blocks,
            offsets,
            block_of,
        })
    }

    pub fn dims(&self) -> usize {
        self.block_of.len()
    }

    pub fn vocab(&self) -> usize {
        self.blocks[0].vocab()
    }

    pub fn space(&self) -> StateSpace {
        StateSpace::new(self.dims(), self.vocab()).expect("blocks are valid spaces")
    }

    pub fn blocks(&self) -> &[JointTable] {
        &self.blocks
    }

    /// Coordinate range `[start, end)` covered by block `b`.
    pub fn block_range(&self, b: usize) -> std::ops::Range<usize> {
        let start = self.offsets[b];
        start..start + self.blocks[b].dims()
    }

    pub fn block_of(&self, d: usize) -> usize {
        self.block_of[d]
    }

    pub fn prob(&self, state: &State) -> f64 {
        (0..self.blocks.len())
            .map(|b| {
                let r = self.block_range(b);
                self.blocks[b].probs()[encode_radix(&state.tokens()[r], self.vocab())]
            })
            .product()
    }

    pub fn to_dense(&self) -> Result<JointTable> {
        if self.blocks.len() == 1 {
            return Ok(self.blocks[0].clone());
        }
        let space = self.space();
        let n = dense_len(&space)?;
        let probs = (0..n).map(|i| self.prob(&space.decode(i))).collect();
        JointTable::new(space, probs)
    }

    /// Exact marginal on `coords`, in the order given.
    pub fn marginal(&self, coords: &[usize]) -> Result<SubcubePmf> {
        check_coords(coords, self.dims())?;
        let vocab = self.vocab();
        let len = checked_pow(vocab, coords.len())
            .filter(|&n| n <= DENSE_BUDGET)
            .ok_or_else(|| {
                Error::Capability(format!(
                    "marginal over {} coordinates too large",
                    coords.len()
                ))
            })?;

        // Per-block marginal on the coordinates of `coords` it owns.
        let mut block_margs: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
        for b in 0..self.blocks.len() {
            let range = self.block_range(b);
            let positions: Vec<usize> = (0..coords.len())
                .filter(|&i| range.contains(&coords[i]))
                .collect();
            if positions.is_empty() {
                continue;
            }
            let local: Vec<usize> = positions.iter().map(|&i| coords[i] - range.start).collect();
            let table = &self.blocks[b];
            let mut marg = vec![0.0; checked_pow(vocab, local.len()).unwrap()];
            for (idx, &p) in table.probs().iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let tokens = decode_radix(idx, table.dims(), vocab);
                let sub = local.iter().fold(0, |acc, &l| acc * vocab + tokens[l]);
                marg[sub] += p;
            }
            block_margs.push((positions, marg));
        }

        let mut probs = vec![0.0; len];
        for (idx, slot) in probs.iter_mut().enumerate() {
            let tokens = decode_radix(idx, coords.len(), vocab);
            *slot = block_margs
                .iter()
                .map(|(positions, marg)| {
                    marg[positions.iter().fold(0, |acc, &i| acc * vocab + tokens[i])]
                })
                .product();
        }
        Ok(SubcubePmf {
            coords: coords.to_vec(),
            radix: vocab,
            probs,
        })
    }
}

impl From<JointTable> for FactoredJoint {
    fn from(table: JointTable) -> Self {
        FactoredJoint::new(vec![table]).expect("single block is valid")
    }
}

pub(crate) fn check_coords(coords: &[usize], dims: usize) -> Result<()> {
    if coords.is_empty() {
        return Err(Error::config("coordinate subset is empty"));
    }
    if let Some(&c) = coords.iter().find(|&&c| c >= dims) {
        return Err(Error::config(format!(
            "coordinate {c} out of range for D = {dims}"
        )));
    }
    let mut seen = vec![false; dims];
    for &c in coords {
        if std::mem::replace(&mut seen[c], true) {
            return Err(Error::config(format!("coordinate {c} repeated")));
        }
    }
    Ok(())
}

/// A pmf over the sub-cube spanned by `coords`, mixed-radix indexed in the
/// order of `coords` with the given radix.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcubePmf {
    pub coords: Vec<usize>,
    pub radix: usize,
    pub probs: Vec<f64>,
}

impl SubcubePmf {
    pub fn index_of(&self, state: &State) -> usize {
        self.coords
            .iter()
            .fold(0, |acc, &c| acc * self.radix + state.get(c))
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Exact marginal of a dense table on `coords`.
pub fn joint_marginal(table: &JointTable, coords: &[usize]) -> Result<SubcubePmf> {
    FactoredJoint::from(table.clone()).marginal(coords)
}

/// `n` i.i.d. draws from the table.
pub fn sample_joint<R: Rng + ?Sized>(
    table: &JointTable,
    rng: &mut R,
    n: usize,
) -> Result<Vec<State>> {
    let alias = WeightedAliasIndex::new(table.probs().to_vec())
        .map_err(|e| Error::Numeric(format!("cannot build alias table: {e}")))?;
    Ok((0..n).map(|_| table.decode(alias.sample(rng))).collect())
}

/// Source distribution `p₀`; always a product over coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Uniform,
    /// Point mass at the all-mask state.
    Masked,
    /// One pmf over the data vocabulary per coordinate.
    FactorizedCustom(Vec<Vec<f64>>),
}

impl SourceSpec {
    pub fn factorized(tables: Vec<Vec<f64>>) -> Result<Self> {
        for (d, row) in tables.iter().enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::config(format!(
                    "source table {d} has a negative or non-finite entry"
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > MASS_TOL {
                return Err(Error::config(format!("source table {d} sums to {total}")));
            }
        }
        Ok(SourceSpec::FactorizedCustom(tables))
    }

    pub fn is_masked(&self) -> bool {
        matches!(self, SourceSpec::Masked)
    }

    /// The working state space for data over `dims × vocab`.
    pub fn space(&self, dims: usize, vocab: usize) -> Result<StateSpace> {
        let base = StateSpace::new(dims, vocab)?;
        if let SourceSpec::FactorizedCustom(tables) = self {
            if tables.len() != dims || tables.iter().any(|row| row.len() != vocab) {
                return Err(Error::config(format!(
                    "custom source must be {dims} tables of {vocab} entries"
                )));
            }
        }
        Ok(if self.is_masked() {
            base.with_mask()
        } else {
            base
        })
    }

    /// Draws `X(0)`.
    pub fn sample<R: Rng + ?Sized>(&self, space: &StateSpace, rng: &mut R) -> State {
        let tokens = match self {
            SourceSpec::Uniform => (0..space.dims())
                .map(|_| rng.random_range(0..space.vocab()))
                .collect(),
            SourceSpec::Masked => vec![
                space
                    .mask_token()
                    .expect("masked source needs a mask token");
                space.dims()
            ],
            SourceSpec::FactorizedCustom(tables) => tables
                .iter()
                .map(|row| {
                    let u: f64 = rng.random();
                    crate::samplers::pick_index(row, row.iter().sum(), u)
                })
                .collect(),
        };
        State::new(tokens)
    }
}

/// `p₀^d(token)`.
pub fn source_pmf(src: &SourceSpec, space: &StateSpace, d: usize, token: usize) -> Result<f64> {
    if d >= space.dims() {
        return Err(Error::domain(format!(
            "dimension {d} out of range for D = {}",
            space.dims()
        )));
    }
    space.check_token(token)?;
    Ok(source_pmf_unchecked(src, space, d, token))
}

#[inline]
pub(crate) fn source_pmf_unchecked(
    src: &SourceSpec,
    space: &StateSpace,
    d: usize,
    token: usize,
) -> f64 {
    match src {
        SourceSpec::Uniform => {
            if token < space.vocab() {
                1.0 / space.vocab() as f64
            } else {
                0.0
            }
        }
        SourceSpec::Masked => {
            if Some(token) == space.mask_token() {
                1.0
            } else {
                0.0
            }
        }
        SourceSpec::FactorizedCustom(tables) => tables[d].get(token).copied().unwrap_or(0.0),
    }
}
