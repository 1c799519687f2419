//! Seed derivation. Every random stream in the engine is a ChaCha8 generator
//! seeded from a parent seed and a small tuple of stream coordinates, so
//! results never depend on call order across streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type EngineRng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a stream coordinate.
#[inline]
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(seed ^ mix64(stream))
}

pub fn rng_for(seed: u64, stream: u64) -> EngineRng {
    EngineRng::seed_from_u64(derive_seed(seed, stream))
}

/// Stream tags used across the crate.
pub mod stream {
    pub const CAP: u64 = 0x01;
    pub const WALKS: u64 = 0x02;
    pub const BATCHES: u64 = 0x03;
    pub const INIT: u64 = 0x04;
    pub const TAGS: u64 = 0x05;
}
