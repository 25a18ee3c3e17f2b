//! Seed derivation. Every stochastic choice in a run draws from a ChaCha8
//! stream whose seed is a hash of the run seed and a tag path, so results do
//! not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

/// Stream tags.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const LABELED_SAMPLER: u64 = 2;
    pub const UNLABELED_SAMPLER: u64 = 3;
    pub const WEAK: u64 = 4;
    pub const STRONG: u64 = 5;
    pub const DATA: u64 = 6;
    pub const LABELED_VIEW: u64 = 7;
}
