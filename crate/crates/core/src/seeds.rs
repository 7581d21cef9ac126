//! Sub-seed derivation.

use sha2::{Digest, Sha256};

/// Stable sub-seed of `seed` for the stream named by `tag` and `parts`.
pub fn derive_seed(seed: u64, tag: &str, parts: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    for p in parts {
        h.update(p.to_le_bytes());
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("sha256 is 32 bytes"))
}
