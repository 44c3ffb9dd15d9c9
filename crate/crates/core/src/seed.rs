//! Coordinate-keyed seed derivation.
//!
//! Every random draw in a run is seeded from the master seed plus the
//! coordinates of the draw (model, dimension, direction, budget, trial
//! indices) and a purpose tag. Any sub-run recomputed in isolation therefore
//! sees exactly the same randomness as the full run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Incrementally builds a 64-bit seed from a master seed and tagged parts.
#[derive(Debug, Clone)]
pub struct SeedPath {
    hasher: Sha256,
}

impl SeedPath {
    pub fn new(master: u64, purpose: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"steerbench-seed/v1");
        hasher.update(master.to_le_bytes());
        let path = Self { hasher };
        path.with(purpose)
    }

    /// Appends a string part. Parts are length-prefixed so that
    /// `("ab", "c")` and `("a", "bc")` derive different seeds.
    pub fn with(mut self, part: &str) -> Self {
        self.hasher.update((part.len() as u64).to_le_bytes());
        self.hasher.update(part.as_bytes());
        self
    }

    pub fn with_int(mut self, part: u64) -> Self {
        self.hasher.update(8u64.to_le_bytes());
        self.hasher.update(part.to_le_bytes());
        self
    }

    pub fn seed(&self) -> u64 {
        let digest = self.hasher.clone().finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed())
    }
}
