//! Deterministic seed derivation so every stage and sample gets an
//! independent, reproducible random stream from one global seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the stage or stream named `tag` under `base`.
pub fn derive(base: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, then mixed with the base seed.
    let h = tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3));
    splitmix64(base ^ splitmix64(h))
}

/// Seed for the `index`-th item of a stream.
pub fn derive_index(base: u64, index: u64) -> u64 {
    splitmix64(base.wrapping_add(splitmix64(index.wrapping_add(1))))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
