//! Keyed random substreams.
//!
//! Every random draw in a simulation comes from a generator keyed by a tuple
//! such as `(master_seed, trial, node, round)`, so results never depend on
//! how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a key tuple into a single 64-bit seed.
pub fn derive_seed(keys: &[u64]) -> u64 {
    keys.iter().fold(0x5851_F42D_4C95_7F2D, |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn stream(keys: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(keys))
}
