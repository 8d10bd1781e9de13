//! Seed fan-out.
//!
//! A master seed is split into independent streams by hashing
//! `(master, tag, a, b)` through SplitMix64 rounds. Each stream seeds a
//! ChaCha8 generator, so a draw only depends on its coordinates and never on
//! evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Changing one of these changes every derived draw.
pub mod tag {
    pub const GRAPH: u64 = 0x01;
    pub const SCHEDULE: u64 = 0x02;
    pub const SENSORS: u64 = 0x03;
    pub const OBSERVATIONS: u64 = 0x04;
    pub const JAM: u64 = 0x05;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed for the stream at coordinates `(tag, a, b)`.
pub fn derive_seed(master: u64, tag: u64, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ tag);
    h = splitmix64(h ^ a);
    splitmix64(h ^ b.rotate_left(17))
}

/// A ChaCha8 generator for the stream at `(tag, a, b)`.
pub fn stream(master: u64, tag: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag, a, b))
}
