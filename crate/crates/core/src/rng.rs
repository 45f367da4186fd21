//! Counter-based random streams.
//!
//! Every random draw in a trajectory comes from a stream addressed by
//! `(seed, trajectory, step, lane)`. The address is hashed into the state of
//! a SplitMix64 generator, so any stream can be reconstructed without
//! replaying the others. Results are therefore identical regardless of how
//! trajectories or coordinates are scheduled across threads.

use rand::SeedableRng;
use rand_xoshiro::SplitMix64;

pub type StreamRng = SplitMix64;

/// Which consumer inside a step owns a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lane {
    /// Draw of the initial state `X(0)`.
    Init,
    /// Step-level draws (Poisson event counts, exit times, first-stage jump).
    Step,
    /// Per-coordinate draws of the first (or only) stage.
    Coord(usize),
    /// Per-coordinate draws of a location-corrected second stage.
    SecondStage(usize),
}

impl Lane {
    fn code(self) -> u64 {
        match self {
            Lane::Init => 1 << 62,
            Lane::Step => 2 << 62,
            Lane::Coord(d) => d as u64,
            Lane::SecondStage(d) => (3 << 62) | d as u64,
        }
    }
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn absorb(h: u64, v: u64) -> u64 {
    mix(h ^ v
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(h << 6)
        .wrapping_add(h >> 2))
}

/// Address of the streams belonging to one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrajectoryKey {
    seed: u64,
    trajectory: u64,
}

impl TrajectoryKey {
    pub fn new(seed: u64, trajectory: u64) -> Self {
        Self { seed, trajectory }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trajectory(&self) -> u64 {
        self.trajectory
    }

    /// Stream for `lane` at step `step` (0 for the initial draw).
    pub fn stream(&self, step: usize, lane: Lane) -> StreamRng {
        let h = absorb(
            absorb(absorb(mix(self.seed), self.trajectory), step as u64),
            lane.code(),
        );
        SplitMix64::seed_from_u64(h)
    }
}

/// Stream keyed by an arbitrary list of words, for components outside the
/// trajectory hierarchy (posterior noise, joint sampling).
pub fn keyed_stream(words: &[u64]) -> StreamRng {
    let h = words
        .iter()
        .fold(mix(0x6a09_e667_f3bc_c908), |h, &w| absorb(h, w));
    SplitMix64::seed_from_u64(h)
}
