//! Seed derivation.
//!
//! Every random draw in the simulator comes from a `ChaCha8Rng` whose seed is
//! derived from the experiment seed plus a path of integers (purpose, round,
//! client, ...). Draws therefore never depend on execution order or on how
//! many worker threads ran the computation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags, so that unrelated consumers of the same base seed never
/// share a stream.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const LATENCY: u64 = 4;
    pub const PARTITION: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const SAMPLER: u64 = 7;
    pub const DATA: u64 = 8;
    pub const PROFILE: u64 = 9;
    pub const EXPLORE: u64 = 10;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a path of integers into a new 64-bit seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}
