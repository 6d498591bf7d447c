//! Counter-based seed splitting.
//!
//! Every random stream in the crate is addressed by `(master, stream, index)`
//! and expanded into a ChaCha8 generator. Nothing holds a shared generator, so
//! the values a work item sees do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Keeping them distinct guarantees that, e.g., the a-samples of
/// a curve and the ball nodes at a given a never alias.
pub mod stream {
    pub const INNER_NODES: u64 = 0x01;
    pub const OUTER_NODES: u64 = 0x02;
    pub const A_SAMPLES: u64 = 0x03;
    pub const PER_A: u64 = 0x04;
    pub const QUERY: u64 = 0x05;
    pub const MOLLIFIER: u64 = 0x06;
    pub const CASES: u64 = 0x07;
    pub const PAIR_NODES: u64 = 0x08;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent 64-bit seed for item `index` of `stream`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream)) ^ index)
}

pub fn rng_for(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, stream, index))
}
