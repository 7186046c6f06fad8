//! Seeded random streams.
//!
//! Every stochastic component draws from a [`ChaCha8Rng`] derived from a
//! master seed and a string label, so independent streams (one per mesh, per
//! trial, per record) do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type KitRng = ChaCha8Rng;

/// RNG seeded directly from a `u64`.
pub fn seeded(seed: u64) -> KitRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream for `(seed, label)`.
pub fn stream(seed: u64, label: &str) -> KitRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}
