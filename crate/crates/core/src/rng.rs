//! Counter-style keyed random streams.
//!
//! Every draw is addressed by `(seed, sample index, purpose tag)`, so the
//! value for a sample never depends on how many other samples were drawn,
//! in what order, or on how many threads did the drawing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tag for per-mode amplitude draws; the Noll index is added to it.
pub const TAG_AMPLITUDE: u64 = 0x616d_706c_0000_0000;
/// Tag for the per-sample noise stream.
pub const TAG_NOISE: u64 = 0x6e6f_6973_0000_0000;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix `(seed, index, tag)` into a single 64-bit key.
pub fn derive_seed(seed: u64, index: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ index) ^ tag)
}

/// Independent ChaCha stream for `(seed, index, tag)`.
pub fn keyed_rng(seed: u64, index: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index, tag))
}
