//! Splittable deterministic random streams.
//!
//! Every randomized stage derives its generator from an [`RngKey`]: 32 bytes
//! of SHA-256 output that can be split into independent child keys by label
//! and index. Two runs with the same root seed therefore produce identical
//! streams regardless of iteration or thread order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// A 256-bit key identifying one deterministic random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngKey([u8; 32]);

impl RngKey {
    /// Root key for a run, derived from the user-facing seed.
    pub fn from_seed(seed: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"flowsynth.root");
        hasher.update(seed.to_le_bytes());
        RngKey(hasher.finalize().into())
    }

    /// Derive an independent child stream. Distinct `(label, index)` pairs
    /// yield statistically independent generators.
    pub fn child(&self, label: &str, index: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(self.0);
        hasher.update([0x1f]);
        hasher.update(label.as_bytes());
        hasher.update([0x1f]);
        hasher.update(index.to_le_bytes());
        RngKey(hasher.finalize().into())
    }

    /// Child keyed by an arbitrary string (used for per-document streams).
    pub fn child_str(&self, label: &str, name: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(self.0);
        hasher.update([0x2f]);
        hasher.update(label.as_bytes());
        hasher.update([0x2f]);
        hasher.update(name.as_bytes());
        RngKey(hasher.finalize().into())
    }

    /// Instantiate the stream cipher generator for this key.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.0)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(RngKey(arr))
    }
}
