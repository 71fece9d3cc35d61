//! Deterministic seed derivation.
//!
//! All randomness in the pipeline flows from a single user seed. Module
//! code derives per-purpose streams with `mix`, so the same top-level seed
//! reproduces every artifact byte for byte.

/// splitmix64 finalizer; decorrelates nearby seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a purpose tag.
pub fn mix(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

/// Fixed tags for the CLI seed fan-out (documented in the README).
pub mod tag {
    pub const SYNTH: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const EXPLAIN: u64 = 3;
    pub const FOLDS: u64 = 4;
}
