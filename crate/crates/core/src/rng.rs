//! Seeded randomness.
//!
//! Every randomized operation in the crate draws from a ChaCha8 stream seeded
//! with `ChaCha8Rng::seed_from_u64(seed)`. The ChaCha8 output stream and the
//! rand 0.8 sampling routines used on top of it (`gen_range`, `shuffle`,
//! `index::sample`) are value-stable, so a seed reproduces the same splits,
//! samples and models across builds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed for item `index` of a run seeded with
/// `master`: `splitmix64(master ^ splitmix64(index))`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}
