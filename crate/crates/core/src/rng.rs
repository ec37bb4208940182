//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a user seed plus a stream id, so independent consumers never
//! share state and runs replay bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream ids reserved for the harness.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SAMPLER: u64 = 2;
    pub const GRAD_NOISE: u64 = 3;
    pub const ITERATE_PICK: u64 = 4;
    pub const SYNTHETIC: u64 = 5;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes two 64-bit values into one (splitmix64 finalizer).
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
