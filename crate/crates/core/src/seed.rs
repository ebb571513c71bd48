//! Seed derivation.
//!
//! Child seeds are a hash of the parent seed and a stage label, so adding a
//! new consumer of randomness never perturbs the streams of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed from `master` and a stage label.
pub fn derive(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 yields 32 bytes"))
}

/// Seed for cell `(i, j)` of an evaluation grid.
pub fn cell(base: u64, i: usize, j: usize) -> u64 {
    derive(base, &format!("cell/{i}/{j}"))
}

/// The generator used everywhere randomness is needed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
