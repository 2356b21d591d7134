//! Deterministic randomness.
//!
//! All randomness in an election flows from one master seed. Each consumer
//! gets its own ChaCha20 stream keyed by `SHA-256(seed || label)`, so results
//! do not depend on the order in which consumers run.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub fn rng_from_bytes(material: &[u8]) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(Sha256::digest(material).into())
}

/// Stream for `label` under a 32-byte secret seed.
pub fn derive_rng(seed: &[u8; 32], label: &str) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(seed);
    h.update((label.len() as u64).to_be_bytes());
    h.update(label.as_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

/// Sub-seed for `label` under a 32-byte secret seed.
pub fn derive_seed(seed: &[u8; 32], label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"subseed");
    h.update(seed);
    h.update(label.as_bytes());
    h.finalize().into()
}

/// Expands a user-facing numeric seed into the master seed.
pub fn master_seed(seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"selene-master-seed");
    h.update(seed.to_le_bytes());
    h.finalize().into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn labels_separate_streams() {
        let seed = master_seed(7);
        let a = derive_rng(&seed, "a").next_u64();
        assert_eq!(a, derive_rng(&seed, "a").next_u64());
        assert_ne!(a, derive_rng(&seed, "b").next_u64());
        assert_ne!(a, derive_rng(&master_seed(8), "a").next_u64());
    }
}
