//! Seeded random streams.
//!
//! Every stochastic component owns its own `ChaCha8Rng`. Independent streams
//! are derived from a base seed and a stream tag so that adding a consumer
//! never perturbs the draws of another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags for [`derive_seed`].
pub mod stream {
    pub const CORPUS: u64 = 0xc0_7b05;
    pub const MODEL_INIT: u64 = 0x1417;
    pub const DREAM: u64 = 0xd2ea_3;
    pub const GRADCHECK: u64 = 0x9c4e_c4;
    pub const BOOTSTRAP: u64 = 0xb007;
    pub const GENERATE: u64 = 0x6e4e_7a7e;
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer over `(base, tag)`.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derived(base: u64, tag: u64) -> Rng {
    seeded(derive_seed(base, tag))
}
