//! Per-path random streams.
//!
//! Each path draws from a ChaCha8 stream keyed by `(seed, path index)`, so a
//! path's numbers do not depend on how paths are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PathRng = ChaCha8Rng;

pub fn path_rng(seed: u64, index: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Mixes a label into a seed so independent experiment stages get unrelated streams.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    label.bytes().fold(splitmix64(seed), |acc, b| splitmix64(acc ^ u64::from(b)))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
