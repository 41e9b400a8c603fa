//! Seed derivation.
//!
//! One root seed drives every experiment. Independent streams (per slot, per
//! trial, per grid cell) are derived from `(seed, ids...)` so results do not
//! depend on execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// RNG for the stream identified by `ids` under the root `seed`.
pub fn stream(seed: u64, ids: &[u64]) -> SimRng {
    let mut key = splitmix64(seed);
    for &id in ids {
        key = splitmix64(key ^ splitmix64(id.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0xA076_1D64_78BD_642F));
    rng.set_stream(key);
    rng
}

/// Sub-seed for a labelled purpose, so separate stages draw from disjoint streams.
pub fn derive_seed(seed: u64, ids: &[u64]) -> u64 {
    let mut key = splitmix64(seed);
    for &id in ids {
        key = splitmix64(key ^ id);
    }
    key
}
