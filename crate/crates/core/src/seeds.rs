//! Deterministic sub-seed derivation.
//!
//! Every random stream is keyed by `sub_seed(parent, stream)`, a splitmix64
//! step over `parent + stream * golden`, so streams never depend on the order
//! in which they are drawn.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sub_seed(parent: u64, stream: u64) -> u64 {
    splitmix64(parent.wrapping_add(stream.wrapping_mul(GOLDEN)))
}

/// `sub_seed` applied along a path of stream ids.
pub fn derive(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(parent, |s, &p| sub_seed(s, p))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
