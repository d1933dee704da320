//! Seed derivation.
//!
//! A run is driven by one master seed. Every consumer of randomness asks for
//! its own stream with a label and an index, e.g. `("train", 3)`. The derived
//! seed is the first eight bytes (little endian) of
//! `SHA-256(master_le || label || 0x00 || index_le)`, so streams never depend
//! on how many numbers other components happened to draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Random number generator used throughout the crate.
pub type Rng = ChaCha8Rng;

pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    hasher.update([0u8]);
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_rng(master: u64, label: &str, index: u64) -> Rng {
    rng_from_seed(derive_seed(master, label, index))
}
