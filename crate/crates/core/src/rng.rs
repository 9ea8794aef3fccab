//! Labelled random substreams.
//!
//! A run has one root seed. Every stochastic component (a fiber, a detector
//! bank, the source) draws from its own ChaCha stream whose seed is derived
//! from the root seed and a stable label, so adding or removing draws in one
//! component leaves every other component's sequence untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The generator used for every simulation draw.
pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    key: [u8; 32],
}

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"qnet/root");
        hasher.update(seed.to_le_bytes());
        Self {
            key: hasher.finalize().into(),
        }
    }

    fn derive(&self, label: &str) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.key);
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        hasher.finalize().into()
    }

    /// A subtree for a nested component (a batch, a shot, a link).
    pub fn child(&self, label: &str) -> SeedTree {
        SeedTree {
            key: self.derive(label),
        }
    }

    pub fn stream(&self, label: &str) -> SimRng {
        ChaCha8Rng::from_seed(self.derive(label))
    }
}
