//! Samplers for an arbitrary conditional rate `Q_t^d(x, z | x₁)`.
//!
//! Each coordinate draws `x₁^d` from its posterior row and then follows the
//! conditional rate. Draw order on a coordinate stream is fixed: `x₁`, then
//! the stay/cell uniform, then the target uniform. Euler and the one-cell
//! staircase therefore consume identical numbers and agree bit for bit.

use rand::Rng;

use super::{pick_index, ConditionalRate, StepCtx};
use crate::error::{Error, Result};
use crate::path::PosteriorEval;
use crate::rng::{Lane, StreamRng};
use crate::space::State;

/// A committed or candidate jump of one coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Arrival {
    time: f64,
    coord: usize,
    target: usize,
}

fn rate_model(ctx: &StepCtx<'_>) -> Result<std::sync::Arc<dyn ConditionalRate>> {
    ctx.spec.cond_rate.clone().ok_or_else(|| {
        Error::config(format!(
            "sampler {} needs a conditional rate",
            ctx.spec.kind
        ))
    })
}

fn draw_x1(post: &PosteriorEval, d: usize, rng: &mut StreamRng) -> usize {
    let row = post.row(d);
    let total: f64 = row.iter().sum();
    pick_index(row, total, rng.random())
}

pub(super) fn euler_general_step(ctx: &mut StepCtx<'_>, x: &mut State, k: usize) -> Result<()> {
    let (a, b) = ctx.spec.grid.interval(k);
    let tau = b - a;
    let rate = rate_model(ctx)?;
    let width = ctx.path.space().working_vocab();
    let key = ctx.key;
    let post = ctx.session.posterior(a, x)?;
    let mut row = vec![0.0; width];
    for d in 0..x.len() {
        let mut rng = key.stream(k, Lane::Coord(d));
        let current = post.x.get(d);
        let x1 = draw_x1(post, d, &mut rng);
        rate.fill_row(a, d, current, x1, &mut row);
        let lambda: f64 = row.iter().sum();
        if lambda <= 0.0 {
            continue;
        }
        let u: f64 = rng.random();
        if u < (-tau * lambda).exp() {
            continue;
        }
        let z = pick_index(&row, lambda, rng.random());
        x.set(d, z);
        ctx.jumps += 1;
    }
    Ok(())
}

/// Staircase survival on `[a, b]` split into `m` cells with left-endpoint
/// rates. Returns the cell's left endpoint and the target on a jump.
#[allow(clippy::too_many_arguments)]
fn staircase(
    rate: &dyn ConditionalRate,
    d: usize,
    current: usize,
    x1: usize,
    a: f64,
    b: f64,
    m: usize,
    rng: &mut StreamRng,
    row: &mut [f64],
) -> Option<(f64, usize)> {
    let h = (b - a) / m as f64;
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for i in 0..m {
        let s = a + i as f64 * h;
        rate.fill_row(s, d, current, x1, row);
        let lambda: f64 = row.iter().sum();
        if lambda <= 0.0 {
            continue;
        }
        cumulative += lambda;
        if u >= (-h * cumulative).exp() {
            let z = pick_index(row, lambda, rng.random());
            return Some((s, z));
        }
    }
    None
}

/// Runs the staircase for every coordinate and returns the arrivals sorted
/// by time, ties broken by coordinate index.
fn arrivals(
    rate: &dyn ConditionalRate,
    post: &PosteriorEval,
    (a, b): (f64, f64),
    m: usize,
    width: usize,
    mut stream: impl FnMut(usize) -> StreamRng,
) -> Vec<Arrival> {
    let mut row = vec![0.0; width];
    let mut out = Vec::new();
    for d in 0..post.dims() {
        let mut rng = stream(d);
        let current = post.x.get(d);
        let x1 = draw_x1(post, d, &mut rng);
        if let Some((time, target)) = staircase(rate, d, current, x1, a, b, m, &mut rng, &mut row) {
            out.push(Arrival {
                time,
                coord: d,
                target,
            });
        }
    }
    out.sort_by(|p, q| p.time.total_cmp(&q.time).then(p.coord.cmp(&q.coord)));
    out
}

/// `(time, coord)` of the first-stage arrivals of step `k`, in commit order.
#[cfg(test)]
pub(super) fn first_stage_arrivals(
    rate: &dyn ConditionalRate,
    post: &PosteriorEval,
    interval: (f64, f64),
    m: usize,
    width: usize,
    key: crate::rng::TrajectoryKey,
    k: usize,
) -> Vec<(f64, usize)> {
    arrivals(rate, post, interval, m, width, |d| {
        key.stream(k, Lane::Coord(d))
    })
    .into_iter()
    .map(|a| (a.time, a.coord))
    .collect()
}

fn commit(x: &mut State, jumps: &mut u64, arrivals: &[Arrival]) {
    for arr in arrivals {
        x.set(arr.coord, arr.target);
        *jumps += 1;
    }
}

pub(super) fn time_corrected_general_step(
    ctx: &mut StepCtx<'_>,
    x: &mut State,
    k: usize,
) -> Result<()> {
    let interval = ctx.spec.grid.interval(k);
    let rate = rate_model(ctx)?;
    let width = ctx.path.space().working_vocab();
    let (m, key) = (ctx.spec.m, ctx.key);
    let post = ctx.session.posterior(interval.0, x)?;
    let found = arrivals(rate.as_ref(), post, interval, m, width, |d| {
        key.stream(k, Lane::Coord(d))
    });
    commit(x, &mut ctx.jumps, &found);
    Ok(())
}

/// Commits the first `j` arrivals, re-evaluates the posterior at the `j`-th
/// arrival time and reruns the staircase on the rest of the interval.
/// Falls back to the single-stage update when fewer than `j` coordinates
/// arrive or the interval starts at or before `t_θ`.
pub(super) fn location_corrected_general_step(
    ctx: &mut StepCtx<'_>,
    x: &mut State,
    k: usize,
) -> Result<()> {
    let (a, b) = ctx.spec.grid.interval(k);
    let rate = rate_model(ctx)?;
    let width = ctx.path.space().working_vocab();
    let (m, key) = (ctx.spec.m, ctx.key);
    let j = ctx.spec.effective_j(x.len());
    let t_theta = ctx.spec.t_theta;

    let post = ctx.session.posterior(a, x)?;
    let found = arrivals(rate.as_ref(), post, (a, b), m, width, |d| {
        key.stream(k, Lane::Coord(d))
    });
    if found.len() < j || a <= t_theta {
        commit(x, &mut ctx.jumps, &found);
        return Ok(());
    }
    let split = found[j - 1].time;
    commit(x, &mut ctx.jumps, &found[..j]);

    let post = ctx.session.posterior(split, x)?;
    let rest = arrivals(rate.as_ref(), post, (split, b), m, width, |d| {
        key.stream(k, Lane::SecondStage(d))
    });
    commit(x, &mut ctx.jumps, &rest);
    Ok(())
}
