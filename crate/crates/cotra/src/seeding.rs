//! Deterministic seed derivation.
//!
//! Every stochastic component (initialization, pretraining, training, dropout,
//! episode generation, evaluation) draws from its own ChaCha stream, seeded by
//! mixing a base seed with a fixed stream tag. Runs are reproducible because
//! no stream ever shares state with another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags for the pipeline's independent rng streams.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const PRETRAIN: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const GENERATE: u64 = 5;
    pub const BASELINE: u64 = 6;
}

/// splitmix64 finalizer; a cheap bijective mixer with full avalanche.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent seed from a base seed and a stream/index tag.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    splitmix64(base ^ splitmix64(tag))
}

/// ChaCha stream for `(base, tag)`.
pub fn rng_for(base: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tag))
}
