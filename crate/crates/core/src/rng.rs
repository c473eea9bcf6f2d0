//! Seed derivation and generator construction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stable 64-bit hash of a list of labelled parts. Used to give every
/// (cell, trial, purpose) its own independent stream.
pub fn derive_seed(parts: &[&dyn SeedPart]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        part.feed(&mut hasher);
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub trait SeedPart {
    fn feed(&self, hasher: &mut Sha256);
}

impl SeedPart for u64 {
    fn feed(&self, hasher: &mut Sha256) {
        hasher.update([0u8]);
        hasher.update(self.to_le_bytes());
    }
}

impl SeedPart for usize {
    fn feed(&self, hasher: &mut Sha256) {
        (*self as u64).feed(hasher)
    }
}

impl SeedPart for str {
    fn feed(&self, hasher: &mut Sha256) {
        hasher.update([1u8]);
        hasher.update((self.len() as u64).to_le_bytes());
        hasher.update(self.as_bytes());
    }
}

impl SeedPart for &str {
    fn feed(&self, hasher: &mut Sha256) {
        (**self).feed(hasher)
    }
}
