//! DSA signatures over the election group.

use num_bigint::BigUint;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::group::{Exponent, GroupElement, GroupParams};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DsaKeyPair {
    pub x: Exponent,
    pub y: GroupElement,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub r: Exponent,
    pub s: Exponent,
}

impl DsaKeyPair {
    pub fn generate(params: &GroupParams, rng: &mut impl RngCore) -> Self {
        let x = params.random_nonzero_exponent(rng);
        let y = params.encode(&x);
        Self { x, y }
    }
}

/// Leftmost `min(|q|, 256)` bits of SHA-256(message), reduced mod q.
fn digest(params: &GroupParams, message: &[u8]) -> Exponent {
    let h = BigUint::from_bytes_be(&Sha256::digest(message));
    let q_bits = params.q().bits();
    let h = if q_bits < 256 { h >> (256 - q_bits) } else { h };
    params.exponent(h)
}

fn reduce_mod_q(params: &GroupParams, e: &GroupElement) -> Exponent {
    params.exponent(e.value().clone())
}

pub fn sign(params: &GroupParams, key: &DsaKeyPair, message: &[u8], rng: &mut impl RngCore) -> Signature {
    let h = digest(params, message);
    loop {
        let k = params.random_nonzero_exponent(rng);
        let r = reduce_mod_q(params, &params.encode(&k));
        if r.is_zero() {
            continue;
        }
        let k_inv = params.exp_inv(&k).expect("k is nonzero");
        let s = params.exp_mul(&k_inv, &params.exp_add(&h, &params.exp_mul(&key.x, &r)));
        if s.is_zero() {
            continue;
        }
        return Signature { r, s };
    }
}

pub fn verify(params: &GroupParams, y: &GroupElement, message: &[u8], sig: &Signature) -> bool {
    if sig.r.is_zero() || sig.s.is_zero() || sig.r.value() >= params.q() || sig.s.value() >= params.q() {
        return false;
    }
    let Ok(w) = params.exp_inv(&sig.s) else {
        return false;
    };
    let u1 = params.exp_mul(&digest(params, message), &w);
    let u2 = params.exp_mul(&sig.r, &w);
    let v = params.mul(&params.encode(&u1), &params.pow(y, &u2));
    reduce_mod_q(params, &v) == sig.r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_bytes;

    fn setup() -> (GroupParams, DsaKeyPair, DsaKeyPair) {
        let params = GroupParams::generate_seeded(512, 11).unwrap();
        let mut rng = rng_from_bytes(b"dsa-test");
        let a = DsaKeyPair::generate(&params, &mut rng);
        let b = DsaKeyPair::generate(&params, &mut rng);
        (params, a, b)
    }

    #[test]
    fn round_trip_and_mutations() {
        let (params, key, other) = setup();
        let mut rng = rng_from_bytes(b"nonces");
        let msg = b"10:12 ballot bytes".to_vec();
        let sig = sign(&params, &key, &msg, &mut rng);
        assert!(verify(&params, &key.y, &msg, &sig));
        assert!(!verify(&params, &other.y, &msg, &sig));

        for i in 0..msg.len() {
            let mut m = msg.clone();
            m[i] ^= 0x01;
            assert!(!verify(&params, &key.y, &m, &sig), "byte {i}");
        }
        let one = params.exponent(1u32);
        let bumped_r = Signature { r: params.exp_add(&sig.r, &one), s: sig.s.clone() };
        let bumped_s = Signature { r: sig.r.clone(), s: params.exp_add(&sig.s, &one) };
        assert!(!verify(&params, &key.y, &msg, &bumped_r));
        assert!(!verify(&params, &key.y, &msg, &bumped_s));
        let zero = Signature { r: Exponent::zero(), s: sig.s.clone() };
        assert!(!verify(&params, &key.y, &msg, &zero));
    }

    #[test]
    fn works_on_toy_group() {
        let params = GroupParams::toy();
        let mut rng = rng_from_bytes(b"toy-dsa");
        let key = DsaKeyPair::generate(&params, &mut rng);
        for i in 0..50u32 {
            let msg = i.to_be_bytes();
            let sig = sign(&params, &key, &msg, &mut rng);
            assert!(verify(&params, &key.y, &msg, &sig));
        }
    }
}
