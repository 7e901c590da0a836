//! Deterministic stream derivation. All randomness in a run funnels through
//! one root seed; independent consumers (init, data, noise, splits, batch
//! sampling, expert pretraining) get their own streams keyed by purpose tags
//! so that, e.g., editing one domain's spec never perturbs another domain's
//! samples.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_INIT: u64 = 0x01;
pub const STREAM_DATA: u64 = 0x02;
pub const STREAM_NOISE: u64 = 0x03;
pub const STREAM_SPLIT: u64 = 0x04;
pub const STREAM_SAMPLE: u64 = 0x05;
pub const STREAM_EXPERT: u64 = 0x06;

/// SplitMix64 finalizer; bijective on u64, good avalanche.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}

/// Collapse (root seed, purpose tags) into a single sub-seed.
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    let mut h = mix64(root ^ 0x9E37_79B9_7F4A_7C15);
    for &t in tags {
        h = mix64(h ^ t.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x2545_F491_4F6C_DD1D));
    }
    h
}

/// A ChaCha stream for the given purpose, independent of every other tag tuple.
pub fn stream(root: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, tags))
}
