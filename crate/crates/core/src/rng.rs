//! Seed derivation for named sub-streams.
//!
//! Every source of randomness in a run flows from the single config seed
//! through labelled sub-streams (world construction, environment noise,
//! BALD sampling, generator draws). Streams are derived with a stable hash
//! so that changing one consumer (e.g. the BALD sample count) never shifts
//! the draws seen by another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over raw bytes. Stable across platforms and releases, unlike
/// `DefaultHasher`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// splitmix64 finalizer, used to decorrelate derived seeds.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a sub-seed from a base seed, a stream label, and integer salts.
pub fn derive_seed(base: u64, label: &str, salts: &[u64]) -> u64 {
    let mut h = fnv1a(label.as_bytes()) ^ base.wrapping_mul(0x9e3779b97f4a7c15);
    for &s in salts {
        h = fnv1a(&s.to_le_bytes()) ^ mix(h);
    }
    mix(h)
}

/// Counter-based stream for a named sub-seed.
pub fn stream(base: u64, label: &str, salts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, label, salts))
}
