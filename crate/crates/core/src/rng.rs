//! Deterministic RNG plumbing: every random stream is a ChaCha8 generator
//! derived from (base seed, stage tag), so runs reproduce bit-for-bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stable 64-bit hash combine (FNV-1a over the tag, mixed with the base).
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ base.rotate_left(17);
    for b in tag.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    // splitmix64 finalizer
    h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng_for(base: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tag))
}

/// Integer hash for per-texel procedural noise (splitmix64 of packed coords).
pub fn hash_coords(seed: u64, a: i64, b: i64, c: i64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add((a as u64).wrapping_mul(0xc2b2_ae3d_27d4_eb4f))
        .wrapping_add((b as u64).wrapping_mul(0x1656_67b1_9e37_79f9))
        .wrapping_add((c as u64).wrapping_mul(0x27d4_eb2f_1656_67c5));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform f32 in [0,1) from a hash value.
pub fn hash_unit(h: u64) -> f32 {
    ((h >> 40) as f32) / (1u64 << 24) as f32
}
