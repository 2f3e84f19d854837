//! Keyed random streams.
//!
//! Every random decision in the crate draws from its own ChaCha8 stream whose
//! 256-bit seed is `SHA-256(domain || 0x00 || part_0 || 0x00 || part_1 ...)`.
//! Integer parts are encoded little-endian. Streams therefore depend only on
//! what they are keyed by, never on iteration order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct StreamKey {
    hasher: Sha256,
}

impl StreamKey {
    pub fn new(domain: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(domain.as_bytes());
        hasher.update([0u8]);
        Self { hasher }
    }

    pub fn u64(mut self, value: u64) -> Self {
        self.hasher.update(value.to_le_bytes());
        self.hasher.update([0u8]);
        self
    }

    pub fn str(mut self, value: &str) -> Self {
        self.hasher.update((value.len() as u64).to_le_bytes());
        self.hasher.update(value.as_bytes());
        self.hasher.update([0u8]);
        self
    }

    pub fn bytes(mut self, value: &[u8]) -> Self {
        self.hasher.update((value.len() as u64).to_le_bytes());
        self.hasher.update(value);
        self.hasher.update([0u8]);
        self
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(digest32(self.hasher))
    }
}

pub fn digest32(hasher: Sha256) -> [u8; 32] {
    let out = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&out);
    seed
}

/// SHA-256 of the strings joined by `\n`.
pub fn digest_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for (i, line) in lines.into_iter().enumerate() {
        if i > 0 {
            hasher.update(b"\n");
        }
        hasher.update(line.as_bytes());
    }
    digest32(hasher)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
