//! Deterministic seeding.
//!
//! Every random draw in the crate goes through a ChaCha8 stream so that
//! results are reproducible across platforms. Independent trials get their
//! own stream via [`derive_seed`], which keeps outputs identical no matter
//! how trials are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for trial `index` of stream `stream` under a base seed.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(stream)).wrapping_add(index))
}

pub fn trial_rng(base: u64, stream: u64, index: u64) -> Rng {
    rng_from_seed(derive_seed(base, stream, index))
}
