//! Seeded random streams.
//!
//! Every stochastic stage draws from a [`SeedRng`] whose seed is derived from
//! the stage seed plus a tuple of stream coordinates, so parallel schedules
//! cannot change results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeedRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with stream coordinates into a new 64-bit seed.
pub fn derive_seed(seed: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(seed), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

/// Derives a seed from a string label, e.g. a pipeline stage name.
pub fn derive_seed_labeled(seed: u64, label: &str) -> u64 {
    // FNV-1a keeps the label hash stable across platforms and releases.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    derive_seed(seed, &[h])
}

pub fn stream(seed: u64, coords: &[u64]) -> SeedRng {
    SeedRng::seed_from_u64(derive_seed(seed, coords))
}

pub fn seeded(seed: u64) -> SeedRng {
    SeedRng::seed_from_u64(seed)
}
