//! Seed derivation.
//!
//! Every random stream in the crate (fold splits, bootstrap draws, feature
//! subsets, Monte Carlo noise) is derived from a master seed and a path of
//! integer labels, so results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a label.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    mix64(mix64(parent) ^ label.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Derive a seed from a path of labels.
pub fn derive_path(parent: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(parent, |s, &l| derive_seed(s, l))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Stream labels, kept distinct so e.g. nested fold splits never share a
// stream with learner-internal randomness.
pub(crate) const STREAM_FOLDS: u64 = 1;
pub(crate) const STREAM_NESTED: u64 = 2;
pub(crate) const STREAM_LEARNER: u64 = 3;
pub(crate) const STREAM_REPETITION: u64 = 4;
pub(crate) const STREAM_SIMULATION: u64 = 5;
