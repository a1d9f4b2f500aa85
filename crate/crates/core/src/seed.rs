//! Counter-derived sub-seeds so parallel work is independent of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The deterministic RNG used everywhere randomness enters the system.
pub type DetRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed for work item `index` in stream `domain` of a master seed.
pub fn sub_seed(master: u64, domain: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ domain) ^ index)
}

pub fn rng_for(master: u64, domain: u64, index: u64) -> DetRng {
    DetRng::seed_from_u64(sub_seed(master, domain, index))
}

/// Stream identifiers for `sub_seed`.
pub mod domain {
    pub const SESSION: u64 = 1;
    pub const SPLIT_HALF: u64 = 2;
    pub const WORLD: u64 = 3;
    pub const NOISE: u64 = 4;
}
