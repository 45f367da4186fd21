//! Samplers driven directly by the mixture-path posterior.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::{pick_excluding, sample_exit_time, StepCtx};
use crate::error::{Error, Result};
use crate::path::PosteriorEval;
use crate::rng::{Lane, StreamRng};
use crate::schedule::{rate_factor_unchecked, survival_power};
use crate::schedule_opt::RateBoundProfile;
use crate::space::State;

/// Relative slack allowed when checking the uniformization bound.
const BOUND_SLACK: f64 = 1e-9;

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let dist =
        Poisson::new(mean).map_err(|e| Error::Numeric(format!("poisson mean {mean}: {e}")))?;
    let draw: f64 = dist.sample(rng);
    Ok(draw as u64)
}

/// Exact CTMC simulation on one interval by thinning a Poisson clock of
/// rate `λ_k = D·sup κ̇/(1 − κ)`.
pub(super) fn uniformization_interval(
    ctx: &mut StepCtx<'_>,
    x: &mut State,
    k: usize,
) -> Result<()> {
    let (a, b) = ctx.spec.grid.interval(k);
    let schedule = ctx.path.schedule();
    let profile = RateBoundProfile::new(schedule, ctx.spec.grid.delta());
    let lambda = x.len() as f64 * profile.bound_unchecked(a, b);
    let mut rng = ctx.key.stream(k, Lane::Step);
    let events = poisson((b - a) * lambda, &mut rng)?;
    let mut times: Vec<f64> = (0..events)
        .map(|_| a + (b - a) * rng.random::<f64>())
        .collect();
    times.sort_by(f64::total_cmp);

    for s in times {
        let factor = rate_factor_unchecked(&schedule, s);
        if factor <= 0.0 {
            continue;
        }
        let post = ctx.session.posterior(s, x)?;
        let outflow = factor * (0..x.len()).map(|d| post.off_mass(d)).sum::<f64>();
        if outflow > lambda * (1.0 + BOUND_SLACK) {
            return Err(Error::Invariant(format!(
                "uniformization bound {lambda} below outflow {outflow} at t = {s}"
            )));
        }
        let target = rng.random::<f64>() * lambda / factor;
        if let Some((d, z)) = pick_pair(post, target) {
            x.set(d, z);
            ctx.jumps += 1;
        }
    }
    Ok(())
}

/// The `(d, z)` whose cumulative posterior mass first exceeds `target`,
/// scanning off-diagonal entries in coordinate-major order.
fn pick_pair(post: &PosteriorEval, target: f64) -> Option<(usize, usize)> {
    let mut acc = 0.0;
    let mut last = None;
    for d in 0..post.dims() {
        let current = post.x.get(d);
        for (z, &p) in post.row(d).iter().enumerate() {
            if z != current && p > 0.0 {
                acc += p;
                last = Some((d, z));
                if target < acc {
                    return last;
                }
            }
        }
    }
    // Rounding can leave `target` a hair above the total.
    if target <= acc * (1.0 + BOUND_SLACK) {
        last
    } else {
        None
    }
}

/// Largest mean for which Poisson counts are drawn by CDF inversion.
const INVERSION_MAX_MEAN: f64 = 30.0;

/// Poisson count by inversion of a single uniform, so that `u < e^{−μ}` is
/// exactly the no-event case.
fn poisson_by_inversion<R: Rng + ?Sized>(mean: f64, u: f64, rng: &mut R) -> Result<u64> {
    if mean > INVERSION_MAX_MEAN {
        return poisson(mean, rng);
    }
    let mut p = (-mean).exp();
    let mut cdf = p;
    let mut n = 0;
    while u >= cdf && p > 0.0 {
        n += 1;
        p *= mean / n as f64;
        cdf += p;
    }
    Ok(n)
}

/// Independent Poisson jump counts per `(d, z)`, summed as integers and
/// reverted when the result leaves the data vocabulary.
///
/// The counts are drawn as a Poisson total followed by a multinomial split,
/// which has the same law. The total consumes the first uniform and each
/// allocation the next, mirroring the Euler sampler's draws, so the two
/// samplers agree whenever no coordinate sees more than one event.
pub(super) fn tau_leaping_step(ctx: &mut StepCtx<'_>, x: &mut State, k: usize) -> Result<()> {
    let (a, b) = ctx.spec.grid.interval(k);
    let scale = (b - a) * rate_factor_unchecked(&ctx.path.schedule(), a);
    let vocab = ctx.path.space().vocab();
    let post = ctx.session.posterior(a, x)?;
    for d in 0..x.len() {
        let mass = post.off_mass(d);
        if mass <= 0.0 {
            continue;
        }
        let current = post.x.get(d);
        let mut rng = ctx.key.stream(k, Lane::Coord(d));
        let u: f64 = rng.random();
        let events = poisson_by_inversion(scale * mass, u, &mut rng)?;
        let mut shift: i64 = 0;
        for _ in 0..events {
            let z = pick_excluding(post.row(d), current, mass, rng.random());
            shift += z as i64 - current as i64;
        }
        if shift != 0 {
            let landed = current as i64 + shift;
            if (0..vocab as i64).contains(&landed) {
                x.set(d, landed as usize);
                ctx.jumps += 1;
            }
        }
    }
    Ok(())
}

/// Per-coordinate update with stay probability `stay(λ^d)`, where `λ^d` is
/// the off-diagonal posterior mass, and targets drawn from the posterior.
fn parallel_update(
    post: &PosteriorEval,
    x: &mut State,
    jumps: &mut u64,
    mut stream: impl FnMut(usize) -> StreamRng,
    stay: impl Fn(f64) -> f64,
) {
    for d in 0..x.len() {
        let mass = post.off_mass(d);
        if mass <= 0.0 {
            continue;
        }
        let mut rng = stream(d);
        let u: f64 = rng.random();
        if u < stay(mass) {
            continue;
        }
        let z = pick_excluding(post.row(d), post.x.get(d), mass, rng.random());
        x.set(d, z);
        *jumps += 1;
    }
}

pub(super) fn euler_step(ctx: &mut StepCtx<'_>, x: &mut State, k: usize) -> Result<()> {
    let (a, b) = ctx.spec.grid.interval(k);
    let scale = (b - a) * rate_factor_unchecked(&ctx.path.schedule(), a);
    let key = ctx.key;
    let post = ctx.session.posterior(a, x)?;
    parallel_update(
        post,
        x,
        &mut ctx.jumps,
        |d| key.stream(k, Lane::Coord(d)),
        |mass| (-scale * mass).exp(),
    );
    Ok(())
}

pub(super) fn time_corrected_step(ctx: &mut StepCtx<'_>, x: &mut State, k: usize) -> Result<()> {
    let (a, b) = ctx.spec.grid.interval(k);
    let schedule = ctx.path.schedule();
    let key = ctx.key;
    let post = ctx.session.posterior(a, x)?;
    parallel_update(
        post,
        x,
        &mut ctx.jumps,
        |d| key.stream(k, Lane::Coord(d)),
        |mass| survival_power(&schedule, a, b, mass),
    );
    Ok(())
}

/// Samples the first exit time of the frozen process; if it falls inside
/// the interval, commits that jump, re-evaluates the posterior there and
/// finishes with a time-corrected update.
pub(super) fn location_corrected_step(
    ctx: &mut StepCtx<'_>,
    x: &mut State,
    k: usize,
) -> Result<()> {
    let (a, b) = ctx.spec.grid.interval(k);
    let schedule = ctx.path.schedule();
    let key = ctx.key;
    let mut rng = key.stream(k, Lane::Step);

    let post = ctx.session.posterior(a, x)?;
    let total: f64 = (0..x.len()).map(|d| post.off_mass(d)).sum();
    let exit = sample_exit_time(total, a, &schedule, &mut rng)?;
    if exit >= b {
        return Ok(());
    }
    let target = rng.random::<f64>() * total;
    let Some((d, z)) = pick_pair(post, target) else {
        return Err(Error::Invariant(format!(
            "no jump target for posterior mass {total}"
        )));
    };
    x.set(d, z);
    ctx.jumps += 1;

    let post = ctx.session.posterior(exit, x)?;
    parallel_update(
        post,
        x,
        &mut ctx.jumps,
        |d| key.stream(k, Lane::SecondStage(d)),
        |mass| survival_power(&schedule, exit, b, mass),
    );
    Ok(())
}
