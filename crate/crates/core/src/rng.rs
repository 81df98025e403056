//! Seeded, counter-based random streams.
//!
//! Every stochastic component draws from its own ChaCha8 stream derived from
//! the session seed, so adding draws in one component never perturbs another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

/// Stream identifiers. One per independent consumer of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    SubjectNoise = 1,
    Emg = 2,
    WeightInit = 3,
    Shuffle = 4,
    LiveEmg = 5,
}

pub fn stream(seed: u64, which: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

#[inline]
pub fn gaussian(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}
