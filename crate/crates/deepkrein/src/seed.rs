//! Named seed derivation.
//!
//! Every random stream in an experiment is derived from one master seed and a
//! path string, so results never depend on the order in which streams are
//! created or on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and a path such as `"train/init"`.
pub fn derive(master: u64, path: &str) -> u64 {
    // FNV-1a over the path, then mixed with the master seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in path.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix(master ^ splitmix(h))
}

/// Derives a child seed for the `index`-th member of a family (e.g. a trial).
pub fn derive_indexed(master: u64, path: &str, index: u64) -> u64 {
    splitmix(derive(master, path) ^ splitmix(index.wrapping_add(1)))
}

/// A deterministic generator for a named stream.
pub fn rng(master: u64, path: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, path))
}
