//! Seeded random streams.
//!
//! Every random object in the crate is drawn from a ChaCha8 stream whose key
//! is derived from a user seed plus a list of integer tags, so that e.g. the
//! block at (r, c) of a coupled operator gets the same entries no matter in
//! which order the blocks are built.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags used across the crate. Kept in one place so two subsystems
/// never read the same substream by accident.
pub mod tag {
    pub const OPERATOR: u64 = 1;
    pub const SIGNAL: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const MONTE_CARLO: u64 = 4;
    pub const MESSAGE: u64 = 5;
    pub const CHANNEL: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic substream for `(seed, tags...)`.
pub fn substream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut h = splitmix64(seed);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x5851_f42d_4c95_7f2d)));
    }
    for (k, chunk) in key.chunks_mut(8).enumerate() {
        h = splitmix64(h.wrapping_add(k as u64));
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
