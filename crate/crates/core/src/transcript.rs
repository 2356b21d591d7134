//! Fiat-Shamir transcripts.

use num_bigint::BigUint;
use sha2::{Digest, Sha256};

use crate::elgamal::Ciphertext;
use crate::group::{Exponent, GroupElement, GroupParams};

/// Ordered list of labeled byte strings. Each item is length-prefixed, so
/// distinct item lists never share an encoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transcript {
    items: Vec<(String, Vec<u8>)>,
}

impl Transcript {
    pub fn new(context: &str) -> Self {
        let mut t = Self { items: Vec::new() };
        t.append("context", context.as_bytes());
        t
    }

    pub fn append(&mut self, label: &str, bytes: &[u8]) {
        self.items.push((label.to_string(), bytes.to_vec()));
    }

    pub fn append_element(&mut self, label: &str, e: &GroupElement) {
        self.append(label, &e.value().to_bytes_be());
    }

    pub fn append_ciphertext(&mut self, label: &str, ct: &Ciphertext) {
        self.append_element(&format!("{label}.c1"), &ct.c1);
        self.append_element(&format!("{label}.c2"), &ct.c2);
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (label, bytes) in &self.items {
            out.extend_from_slice(&(label.len() as u32).to_be_bytes());
            out.extend_from_slice(label.as_bytes());
            out.extend_from_slice(&(bytes.len() as u64).to_be_bytes());
            out.extend_from_slice(bytes);
        }
        out
    }

    /// SHA-256 over the group fingerprint and the encoded items, reduced mod q.
    pub fn challenge(&self, params: &GroupParams) -> Exponent {
        let mut h = Sha256::new();
        h.update(b"selene-fiat-shamir-v1");
        h.update(params.fingerprint());
        h.update(self.encode());
        params.exponent(BigUint::from_bytes_be(&h.finalize()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_prefix_prevents_concatenation_collisions() {
        let mut a = Transcript::new("t");
        a.append("x", b"ab");
        a.append("y", b"c");
        let mut b = Transcript::new("t");
        b.append("x", b"a");
        b.append("y", b"bc");
        assert_ne!(a.encode(), b.encode());
    }

    #[test]
    fn challenge_is_deterministic() {
        let params = GroupParams::generate_seeded(512, 3).unwrap();
        let mut a = Transcript::new("ctx");
        a.append("m", b"hello");
        assert_eq!(a.challenge(&params), a.clone().challenge(&params));
        // Reduced into the exponent range even when q is tiny.
        let toy = GroupParams::toy();
        let c = a.challenge(&toy);
        assert_eq!(c, a.challenge(&toy));
        assert!(c.value() < toy.q());
    }
}
