//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by `derive(seed, stream, index)`, so results never depend on the
//! order in which parallel jobs are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    // FNV-1a
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Child seed for the `index`-th job of a named stream.
pub fn derive(seed: u64, stream: &str, index: u64) -> u64 {
    splitmix(splitmix(seed ^ label_hash(stream)).wrapping_add(splitmix(index.wrapping_add(0x632b_e59b_d9b4_e019))))
}

pub fn stream(seed: u64, stream: &str, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream, index))
}

pub fn from_seed(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
