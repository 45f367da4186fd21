//! Evaluation against exact marginals, one-step kernel oracles and
//! benchmark sweeps.

mod oracle;
mod sweep;

pub use oracle::{gauss_legendre, one_step_kernel_oracle, KernelOracle, OracleOptions};
pub use sweep::{sweep, write_csv, SweepConfig, SweepRecord, SweepSampler, CSV_HEADER};

use crate::distributions::{check_coords, SubcubePmf};
use crate::error::{Error, Result};
use crate::space::State;

/// Empirical histogram of `samples` on `coords` with the given radix.
/// Returns the normalized histogram and the fraction of samples carrying a
/// token outside the radix.
pub fn histogram(samples: &[State], coords: &[usize], radix: usize) -> Result<(Vec<f64>, f64)> {
    if samples.is_empty() {
        return Err(Error::config("no samples"));
    }
    let dims = samples[0].len();
    check_coords(coords, dims)?;
    let len = crate::space::checked_pow(radix, coords.len()).ok_or_else(|| {
        Error::Capability(format!("histogram over {radix}^{} cells", coords.len()))
    })?;
    let mut counts = vec![0u64; len];
    let mut outside = 0u64;
    for s in samples {
        if s.len() != dims {
            return Err(Error::config(format!(
                "sample of length {} among length {dims}",
                s.len()
            )));
        }
        let mut idx = 0;
        let mut inside = true;
        for &c in coords {
            let tok = s.get(c);
            inside &= tok < radix;
            idx = idx * radix + tok.min(radix - 1);
        }
        if inside {
            counts[idx] += 1;
        } else {
            outside += 1;
        }
    }
    let n = samples.len() as f64;
    Ok((
        counts.into_iter().map(|c| c as f64 / n).collect(),
        outside as f64 / n,
    ))
}

/// `½ Σ |p̂ − p|` between the empirical law of `samples` on `coords` and an
/// exact reference on the same coordinates.
pub fn empirical_tv(samples: &[State], reference: &SubcubePmf, coords: &[usize]) -> Result<f64> {
    if coords != reference.coords.as_slice() {
        return Err(Error::config(format!(
            "reference covers coordinates {:?}, asked for {coords:?}",
            reference.coords
        )));
    }
    let (hist, outside) = histogram(samples, coords, reference.radix)?;
    let l1: f64 = hist
        .iter()
        .zip(&reference.probs)
        .map(|(p, q)| (p - q).abs())
        .sum();
    Ok((0.5 * (l1 + outside)).clamp(0.0, 1.0))
}

/// TV between two empirical sample sets on `coords`.
pub fn sample_tv(a: &[State], b: &[State], coords: &[usize], radix: usize) -> Result<f64> {
    let (ha, oa) = histogram(a, coords, radix)?;
    let (hb, ob) = histogram(b, coords, radix)?;
    let l1: f64 = ha.iter().zip(&hb).map(|(p, q)| (p - q).abs()).sum();
    Ok((0.5 * (l1 + (oa - ob).abs())).clamp(0.0, 1.0))
}

/// `½ Σ |p − q|` between two pmfs of equal length.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::domain(format!(
            "pmf lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            out[o] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::domain(
            "spearman needs two equal-length series of length >= 2",
        ));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mean) * (b - mean);
        sxx += (a - mean) * (a - mean);
        syy += (b - mean) * (b - mean);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}
