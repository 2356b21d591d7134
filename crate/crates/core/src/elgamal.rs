//! ElGamal over the Schnorr group: encryption, re-encryption and the
//! componentwise homomorphism.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::encoding::{join_fields, split_fields};
use crate::group::{Exponent, GroupElement, GroupError, GroupParams};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPair {
    pub sk: Exponent,
    pub pk: GroupElement,
}

impl KeyPair {
    pub fn generate(params: &GroupParams, rng: &mut impl RngCore) -> Self {
        Self::from_secret(params, params.random_nonzero_exponent(rng))
    }

    pub fn from_secret(params: &GroupParams, sk: Exponent) -> Self {
        let pk = params.encode(&sk);
        Self { sk, pk }
    }
}

/// `(c1, c2) = (g^r, pk^r * m)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ciphertext {
    pub c1: GroupElement,
    pub c2: GroupElement,
}

impl Ciphertext {
    /// `c1:c2` in hex.
    pub fn to_cell(&self) -> String {
        join_fields([self.c1.to_hex(), self.c2.to_hex()])
    }

    pub fn from_cell(params: &GroupParams, cell: &str) -> Result<Self, GroupError> {
        let f = split_fields(cell, 2)?;
        Self::from_parts(params, f[0], f[1])
    }

    pub fn from_parts(params: &GroupParams, c1: &str, c2: &str) -> Result<Self, GroupError> {
        Ok(Self {
            c1: params.element_from_hex(c1)?,
            c2: params.element_from_hex(c2)?,
        })
    }

    /// Bytes a signer commits to.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        self.to_cell().into_bytes()
    }
}

pub fn encrypt(params: &GroupParams, pk: &GroupElement, m: &GroupElement, r: &Exponent) -> Ciphertext {
    Ciphertext {
        c1: params.encode(r),
        c2: params.mul(&params.pow(pk, r), m),
    }
}

pub fn encrypt_random(
    params: &GroupParams,
    pk: &GroupElement,
    m: &GroupElement,
    rng: &mut impl RngCore,
) -> (Ciphertext, Exponent) {
    let r = params.random_exponent(rng);
    (encrypt(params, pk, m, &r), r)
}

pub fn decrypt(params: &GroupParams, sk: &Exponent, ct: &Ciphertext) -> GroupElement {
    params.div(&ct.c2, &params.pow(&ct.c1, sk))
}

pub fn reencrypt(params: &GroupParams, pk: &GroupElement, ct: &Ciphertext, r: &Exponent) -> Ciphertext {
    homomorphic_mul(params, ct, &encrypt(params, pk, &params.identity(), r))
}

pub fn homomorphic_mul(params: &GroupParams, a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
    Ciphertext {
        c1: params.mul(&a.c1, &b.c1),
        c2: params.mul(&a.c2, &b.c2),
    }
}

/// Raises both components to `e`; decrypts to `m^e`.
pub fn ciphertext_pow(params: &GroupParams, ct: &Ciphertext, e: &Exponent) -> Ciphertext {
    Ciphertext {
        c1: params.pow(&ct.c1, e),
        c2: params.pow(&ct.c2, e),
    }
}

pub fn homomorphic_product<'a>(
    params: &GroupParams,
    cts: impl IntoIterator<Item = &'a Ciphertext>,
) -> Ciphertext {
    let unit = Ciphertext {
        c1: params.identity(),
        c2: params.identity(),
    };
    cts.into_iter().fold(unit, |acc, ct| homomorphic_mul(params, &acc, ct))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Plain u64 arithmetic, independent of the BigUint code paths.
    fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
        let mut acc = 1;
        b %= m;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * b % m;
            }
            b = b * b % m;
            e >>= 1;
        }
        acc
    }

    fn oracle_encrypt(pk: u64, m: u64, r: u64) -> (u64, u64) {
        (pow_mod(4, r, 23), pow_mod(pk, r, 23) * m % 23)
    }

    fn oracle_decrypt(sk: u64, (c1, c2): (u64, u64)) -> u64 {
        c2 * pow_mod(pow_mod(c1, sk, 23), 21, 23) % 23
    }

    fn toy() -> GroupParams {
        GroupParams::toy()
    }

    fn el(v: u32) -> GroupElement {
        toy().element(v.into()).unwrap()
    }

    fn ct(c1: u32, c2: u32) -> Ciphertext {
        Ciphertext { c1: el(c1), c2: el(c2) }
    }

    #[test]
    fn frozen_values_agree_with_oracle() {
        assert_eq!(pow_mod(4, 3, 23), 18);
        assert_eq!(oracle_encrypt(18, 9, 2), (16, 18));
        assert_eq!(oracle_decrypt(3, (16, 18)), 9);
        let (a1, a2) = oracle_encrypt(18, 1, 5);
        assert_eq!((16 * a1 % 23, 18 * a2 % 23), (8, 8));
        assert_eq!(9 * 12 % 23, 16);
    }

    #[test]
    fn toy_encrypt_decrypt() {
        let p = toy();
        let kp = KeyPair::from_secret(&p, p.exponent(3u32));
        assert_eq!(kp.pk, el(18));
        assert_eq!(encrypt(&p, &kp.pk, &el(9), &p.exponent(2u32)), ct(16, 18));
        assert_eq!(encrypt(&p, &kp.pk, &el(1), &p.exponent(0u32)), ct(1, 1));
        assert_eq!(decrypt(&p, &kp.sk, &ct(16, 18)), el(9));
        assert_eq!(decrypt(&p, &p.exponent(7u32), &ct(1, 6)), el(6));
        assert_eq!(decrypt(&p, &kp.sk, &ct(8, 8)), el(9));
    }

    #[test]
    fn toy_reencrypt() {
        let p = toy();
        let pk = el(18);
        assert_eq!(reencrypt(&p, &pk, &ct(16, 18), &p.exponent(5u32)), ct(8, 8));
        assert_eq!(reencrypt(&p, &pk, &ct(16, 18), &Exponent::zero()), ct(16, 18));
        let a = p.exponent(7u32);
        let b = p.exponent(9u32);
        let twice = reencrypt(&p, &pk, &reencrypt(&p, &pk, &ct(16, 18), &a), &b);
        assert_eq!(twice, reencrypt(&p, &pk, &ct(16, 18), &p.exp_add(&a, &b)));
    }

    #[test]
    fn toy_homomorphism() {
        let p = toy();
        let pk = el(18);
        let sk = p.exponent(3u32);
        let a = encrypt(&p, &pk, &el(9), &p.exponent(2u32));
        let b = encrypt(&p, &pk, &el(12), &p.exponent(5u32));
        assert_eq!(decrypt(&p, &sk, &homomorphic_mul(&p, &a, &b)), el(16));
        let unit = encrypt(&p, &pk, &el(1), &Exponent::zero());
        assert_eq!(decrypt(&p, &sk, &homomorphic_mul(&p, &a, &unit)), el(9));

        // product of encryptions of g^{r_j} decrypts to g^{sum r_j}
        let rs = [3u32, 4, 9, 10];
        let cts: Vec<_> = rs
            .iter()
            .enumerate()
            .map(|(i, &r)| encrypt(&p, &pk, &p.encode(&p.exponent(r)), &p.exponent(i as u32 + 1)))
            .collect();
        let sum = rs.iter().sum::<u32>();
        assert_eq!(
            decrypt(&p, &sk, &homomorphic_product(&p, &cts)),
            p.encode(&p.exponent(sum))
        );
    }

    #[test]
    fn toy_exhaustive_round_trip() {
        let p = toy();
        for sk in 1u64..11 {
            let kp = KeyPair::from_secret(&p, p.exponent(sk));
            for m in 0u64..11 {
                let m_el = p.encode(&p.exponent(m));
                for r in 0u64..11 {
                    let c = encrypt(&p, &kp.pk, &m_el, &p.exponent(r));
                    let oracle = oracle_encrypt(pow_mod(4, sk, 23), pow_mod(4, m, 23), r);
                    assert_eq!(c, ct(oracle.0 as u32, oracle.1 as u32));
                    assert_eq!(decrypt(&p, &kp.sk, &c), m_el);
                }
            }
        }
    }

    #[test]
    fn cell_round_trip_and_membership() {
        let p = toy();
        let c = ct(16, 18);
        assert_eq!(c.to_cell(), "10:12");
        assert_eq!(Ciphertext::from_cell(&p, "10:12").unwrap(), c);
        // 5 is not in the subgroup
        assert_eq!(Ciphertext::from_cell(&p, "5:12"), Err(GroupError::NotInSubgroup));
        assert!(Ciphertext::from_cell(&p, "10").is_err());
    }
}
