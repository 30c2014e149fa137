//! Seeded counter-based random streams.
//!
//! Every random draw comes from a ChaCha stream keyed by `(seed, stream)`, so
//! a value depends only on the configuration and never on call order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stream identifiers. Trial `t` of a purpose uses `purpose + t`.
pub mod streams {
    pub const SYNTHETIC_WEIGHTS: u64 = 1 << 40;
    pub const START_STATES: u64 = 2 << 40;
    pub const PERTURBATIONS: u64 = 3 << 40;
    pub const PROBES: u64 = 4 << 40;
    pub const DATA_STATES: u64 = 5 << 40;
}

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn uniform_vec<R: Rng + ?Sized>(rng: &mut R, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(lo..hi)).collect()
}
