//! Seed derivation. Every stochastic routine takes an explicit `u64` seed and
//! derives one independent stream per work item, so results do not depend on
//! how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `index` within purpose `domain` under `base`.
pub fn derive_seed(base: u64, domain: u64, index: u64) -> u64 {
    mix(mix(mix(base) ^ domain) ^ index)
}

pub fn stream(base: u64, domain: u64, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(base, domain, index))
}

pub(crate) mod domain {
    pub const INITIAL_POSITION: u64 = 0x01;
    pub const DIFFUSION: u64 = 0x02;
    pub const PROTOCOL: u64 = 0x03;
    pub const TRIAL: u64 = 0x04;
}
