//! Deterministic randomness derived from caller-supplied seeds.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Seed bytes for a reproducible run.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Seed(Vec<u8>);

impl Seed {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        Seed(bytes.into())
    }

    /// Parses a hex seed as passed on the command line.
    pub fn from_hex(text: &str) -> Result<Self, hex::FromHexError> {
        hex::decode(text.trim()).map(Seed)
    }

    /// Draws 16 bytes from system entropy.
    pub fn from_entropy() -> Self {
        let mut bytes = vec![0u8; 16];
        rand::thread_rng().fill_bytes(&mut bytes);
        Seed(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    pub fn rng(&self) -> ChaCha20Rng {
        seeded_rng(&self.0)
    }

    /// Derives an independent seed for a named sub-task.
    pub fn derive(&self, label: &str) -> Seed {
        let mut hasher = Sha256::new();
        hasher.update(b"mdhc-seed-derive");
        hasher.update((self.0.len() as u64).to_be_bytes());
        hasher.update(&self.0);
        hasher.update(label.as_bytes());
        Seed(hasher.finalize().to_vec())
    }
}

/// ChaCha20 stream keyed by SHA-256 of the seed bytes.
pub fn seeded_rng(seed: &[u8]) -> ChaCha20Rng {
    let key: [u8; 32] = Sha256::digest(seed).into();
    ChaCha20Rng::from_seed(key)
}
