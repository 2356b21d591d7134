//! Non-interactive sigma protocols (Fiat-Shamir over [`Transcript`]).
//!
//! * [`SchnorrProof`]: knowledge of `x` with `X = g^x`, stored in compact
//!   `(challenge, response)` form.
//! * [`ChaumPedersenProof`]: `log_g X1 = log_h X2`, used for partial decryptions.
//! * [`SameExponentPairProof`]: a teller's commitment pair
//!   `({g^r}, {pk_i^r})` under `pk_T` uses one `r` in both plaintexts.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::elgamal::{ciphertext_pow, homomorphic_mul, Ciphertext};
use crate::encoding::{join_fields, split_fields};
use crate::group::{Exponent, GroupElement, GroupError, GroupParams};
use crate::transcript::Transcript;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchnorrProof {
    pub challenge: Exponent,
    pub response: Exponent,
}

impl SchnorrProof {
    pub fn prove(
        params: &GroupParams,
        statement: &GroupElement,
        witness: &Exponent,
        transcript: &Transcript,
        rng: &mut impl RngCore,
    ) -> Self {
        let nonce = params.random_exponent(rng);
        let commitment = params.encode(&nonce);
        let challenge = Self::challenge(params, statement, &commitment, transcript);
        let response = params.exp_add(&nonce, &params.exp_mul(&challenge, witness));
        Self { challenge, response }
    }

    pub fn verify(&self, params: &GroupParams, statement: &GroupElement, transcript: &Transcript) -> bool {
        if self.challenge.value() >= params.q() || self.response.value() >= params.q() {
            return false;
        }
        // A = g^z * X^-c
        let commitment = params.mul(
            &params.encode(&self.response),
            &params.pow(statement, &params.exp_neg(&self.challenge)),
        );
        Self::challenge(params, statement, &commitment, transcript) == self.challenge
    }

    fn challenge(
        params: &GroupParams,
        statement: &GroupElement,
        commitment: &GroupElement,
        transcript: &Transcript,
    ) -> Exponent {
        let mut t = transcript.clone();
        t.append("proof", b"schnorr");
        t.append_element("g", &params.generator());
        t.append_element("X", statement);
        t.append_element("A", commitment);
        t.challenge(params)
    }

    pub fn to_cell(&self) -> String {
        join_fields([self.challenge.to_hex(), self.response.to_hex()])
    }

    pub fn from_cell(params: &GroupParams, cell: &str) -> Result<Self, GroupError> {
        let f = split_fields(cell, 2)?;
        Ok(Self {
            challenge: params.exponent_from_hex(f[0])?,
            response: params.exponent_from_hex(f[1])?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChaumPedersenProof {
    pub a1: GroupElement,
    pub a2: GroupElement,
    pub response: Exponent,
}

/// Statement for [`ChaumPedersenProof`]: `x1 = g^w` and `x2 = h^w`.
#[derive(Clone, Copy, Debug)]
pub struct DlogEquality<'a> {
    pub g: &'a GroupElement,
    pub h: &'a GroupElement,
    pub x1: &'a GroupElement,
    pub x2: &'a GroupElement,
}

impl ChaumPedersenProof {
    pub fn prove(
        params: &GroupParams,
        statement: DlogEquality<'_>,
        witness: &Exponent,
        transcript: &Transcript,
        rng: &mut impl RngCore,
    ) -> Self {
        let nonce = params.random_exponent(rng);
        let a1 = params.pow(statement.g, &nonce);
        let a2 = params.pow(statement.h, &nonce);
        let c = Self::challenge(params, statement, &a1, &a2, transcript);
        let response = params.exp_add(&nonce, &params.exp_mul(&c, witness));
        Self { a1, a2, response }
    }

    pub fn verify(&self, params: &GroupParams, statement: DlogEquality<'_>, transcript: &Transcript) -> bool {
        if self.response.value() >= params.q() {
            return false;
        }
        let c = Self::challenge(params, statement, &self.a1, &self.a2, transcript);
        params.pow(statement.g, &self.response) == params.mul(&self.a1, &params.pow(statement.x1, &c))
            && params.pow(statement.h, &self.response) == params.mul(&self.a2, &params.pow(statement.x2, &c))
    }

    fn challenge(
        params: &GroupParams,
        s: DlogEquality<'_>,
        a1: &GroupElement,
        a2: &GroupElement,
        transcript: &Transcript,
    ) -> Exponent {
        let mut t = transcript.clone();
        t.append("proof", b"chaum-pedersen");
        t.append_element("g", s.g);
        t.append_element("h", s.h);
        t.append_element("X1", s.x1);
        t.append_element("X2", s.x2);
        t.append_element("A1", a1);
        t.append_element("A2", a2);
        t.challenge(params)
    }

    pub fn to_cell(&self) -> String {
        join_fields([self.a1.to_hex(), self.a2.to_hex(), self.response.to_hex()])
    }

    pub fn from_cell(params: &GroupParams, cell: &str) -> Result<Self, GroupError> {
        let f = split_fields(cell, 3)?;
        Ok(Self {
            a1: params.element_from_hex(f[0])?,
            a2: params.element_from_hex(f[1])?,
            response: params.exponent_from_hex(f[2])?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SameExponentPairProof {
    pub a1: Ciphertext,
    pub a2: Ciphertext,
    pub z_r: Exponent,
    pub z_s1: Exponent,
    pub z_s2: Exponent,
}

/// Statement for [`SameExponentPairProof`]:
/// `c1 = (g^s1, pk_t^s1 * g^r)` and `c2 = (g^s2, pk_t^s2 * pk_i^r)`.
#[derive(Clone, Copy, Debug)]
pub struct PairStatement<'a> {
    pub pk_t: &'a GroupElement,
    pub pk_i: &'a GroupElement,
    pub c1: &'a Ciphertext,
    pub c2: &'a Ciphertext,
}

/// Witness for [`SameExponentPairProof`].
#[derive(Clone, Copy, Debug)]
pub struct PairWitness<'a> {
    pub r: &'a Exponent,
    pub s1: &'a Exponent,
    pub s2: &'a Exponent,
}

impl SameExponentPairProof {
    pub fn prove(
        params: &GroupParams,
        statement: PairStatement<'_>,
        witness: PairWitness<'_>,
        transcript: &Transcript,
        rng: &mut impl RngCore,
    ) -> Self {
        let t = params.random_exponent(rng);
        let u1 = params.random_exponent(rng);
        let u2 = params.random_exponent(rng);
        let a1 = Self::shape(params, statement.pk_t, &params.generator(), &u1, &t);
        let a2 = Self::shape(params, statement.pk_t, statement.pk_i, &u2, &t);
        let c = Self::challenge(params, statement, &a1, &a2, transcript);
        let respond = |nonce: &Exponent, w: &Exponent| params.exp_add(nonce, &params.exp_mul(&c, w));
        Self {
            z_r: respond(&t, witness.r),
            z_s1: respond(&u1, witness.s1),
            z_s2: respond(&u2, witness.s2),
            a1,
            a2,
        }
    }

    pub fn verify(&self, params: &GroupParams, statement: PairStatement<'_>, transcript: &Transcript) -> bool {
        if [&self.z_r, &self.z_s1, &self.z_s2].iter().any(|z| z.value() >= params.q()) {
            return false;
        }
        let c = Self::challenge(params, statement, &self.a1, &self.a2, transcript);
        let lhs1 = homomorphic_mul(params, &self.a1, &ciphertext_pow(params, statement.c1, &c));
        let lhs2 = homomorphic_mul(params, &self.a2, &ciphertext_pow(params, statement.c2, &c));
        lhs1 == Self::shape(params, statement.pk_t, &params.generator(), &self.z_s1, &self.z_r)
            && lhs2 == Self::shape(params, statement.pk_t, statement.pk_i, &self.z_s2, &self.z_r)
    }

    /// `(g^s, pk_t^s * base^e)`
    fn shape(
        params: &GroupParams,
        pk_t: &GroupElement,
        base: &GroupElement,
        s: &Exponent,
        e: &Exponent,
    ) -> Ciphertext {
        Ciphertext {
            c1: params.encode(s),
            c2: params.mul(&params.pow(pk_t, s), &params.pow(base, e)),
        }
    }

    fn challenge(
        params: &GroupParams,
        s: PairStatement<'_>,
        a1: &Ciphertext,
        a2: &Ciphertext,
        transcript: &Transcript,
    ) -> Exponent {
        let mut t = transcript.clone();
        t.append("proof", b"same-exponent-pair");
        t.append_element("pk_t", s.pk_t);
        t.append_element("pk_i", s.pk_i);
        t.append_ciphertext("C1", s.c1);
        t.append_ciphertext("C2", s.c2);
        t.append_ciphertext("A1", a1);
        t.append_ciphertext("A2", a2);
        t.challenge(params)
    }

    pub fn to_cell(&self) -> String {
        join_fields([
            self.a1.c1.to_hex(),
            self.a1.c2.to_hex(),
            self.a2.c1.to_hex(),
            self.a2.c2.to_hex(),
            self.z_r.to_hex(),
            self.z_s1.to_hex(),
            self.z_s2.to_hex(),
        ])
    }

    pub fn from_cell(params: &GroupParams, cell: &str) -> Result<Self, GroupError> {
        let f = split_fields(cell, 7)?;
        Ok(Self {
            a1: Ciphertext::from_parts(params, f[0], f[1])?,
            a2: Ciphertext::from_parts(params, f[2], f[3])?,
            z_r: params.exponent_from_hex(f[4])?,
            z_s1: params.exponent_from_hex(f[5])?,
            z_s2: params.exponent_from_hex(f[6])?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elgamal::encrypt;
    use crate::rng::rng_from_bytes;

    fn el(p: &GroupParams, v: u32) -> GroupElement {
        p.element(v.into()).unwrap()
    }

    #[test]
    fn schnorr_toy() {
        let p = GroupParams::toy();
        let mut rng = rng_from_bytes(b"schnorr");
        let t = Transcript::new("election|ballot|0");
        let x = p.exponent(3u32);
        let stmt = el(&p, 18);
        let proof = SchnorrProof::prove(&p, &stmt, &x, &t, &mut rng);
        assert!(proof.verify(&p, &stmt, &t));

        let bumped = SchnorrProof {
            challenge: proof.challenge.clone(),
            response: p.exp_add(&proof.response, &p.exponent(1u32)),
        };
        // On the toy group a bumped response still collides on the 1/11
        // challenge space sometimes; check against the recomputed equation.
        let a_bumped = p.mul(&p.encode(&bumped.response), &p.pow(&stmt, &p.exp_neg(&bumped.challenge)));
        let a_honest = p.mul(&p.encode(&proof.response), &p.pow(&stmt, &p.exp_neg(&proof.challenge)));
        assert_ne!(a_bumped, a_honest);
    }

    #[test]
    fn schnorr_is_bound_to_context() {
        let p = GroupParams::generate_seeded(512, 5).unwrap();
        let mut rng = rng_from_bytes(b"ctx");
        let x = p.random_exponent(&mut rng);
        let stmt = p.encode(&x);
        let t = Transcript::new("e1|ballot|3");
        let proof = SchnorrProof::prove(&p, &stmt, &x, &t, &mut rng);
        assert!(proof.verify(&p, &stmt, &t));
        assert!(!proof.verify(&p, &stmt, &Transcript::new("e1|ballot|4")));
        let bumped = SchnorrProof {
            challenge: proof.challenge.clone(),
            response: p.exp_add(&proof.response, &p.exponent(1u32)),
        };
        assert!(!bumped.verify(&p, &stmt, &t));
    }

    #[test]
    fn chaum_pedersen_toy() {
        let p = GroupParams::toy();
        let mut rng = rng_from_bytes(b"cp");
        let t = Transcript::new("decrypt");
        let (g, h) = (el(&p, 4), el(&p, 16));
        // 16^3 mod 23 = 2
        let (x1, x2) = (el(&p, 18), el(&p, 2));
        let s = DlogEquality { g: &g, h: &h, x1: &x1, x2: &x2 };
        let proof = ChaumPedersenProof::prove(&p, s, &p.exponent(3u32), &t, &mut rng);
        assert!(proof.verify(&p, s, &t));

        let swapped = DlogEquality { g: &g, h: &h, x1: &x2, x2: &x1 };
        assert!(!proof.verify(&p, swapped, &t));
        // replay against another ciphertext's c1
        let h2 = el(&p, 8);
        let x2b = p.pow(&h2, &p.exponent(3u32));
        let replay = DlogEquality { g: &g, h: &h2, x1: &x1, x2: &x2b };
        let mut hits = 0;
        for i in 0..20u32 {
            let mut r = rng_from_bytes(&i.to_be_bytes());
            let pr = ChaumPedersenProof::prove(&p, s, &p.exponent(3u32), &t, &mut r);
            hits += pr.verify(&p, replay, &t) as u32;
        }
        assert_eq!(hits, 0);
    }

    #[test]
    fn same_exponent_pair_toy() {
        let p = GroupParams::toy();
        let mut rng = rng_from_bytes(b"pair");
        let t = Transcript::new("commitment|1|1");
        let pk_t = el(&p, 18);
        let pk_i = el(&p, 6);
        let (r, s1, s2) = (p.exponent(7u32), p.exponent(2u32), p.exponent(5u32));
        let make = |r: &Exponent| {
            (
                encrypt(&p, &pk_t, &p.encode(r), &s1),
                encrypt(&p, &pk_t, &p.pow(&pk_i, r), &s2),
            )
        };
        let (c1, c2) = make(&r);
        let stmt = PairStatement { pk_t: &pk_t, pk_i: &pk_i, c1: &c1, c2: &c2 };
        let w = PairWitness { r: &r, s1: &s1, s2: &s2 };
        let proof = SameExponentPairProof::prove(&p, stmt, w, &t, &mut rng);
        assert!(proof.verify(&p, stmt, &t));

        // C2 built with r + 1
        let (_, c2_bad) = make(&p.exp_add(&r, &p.exponent(1u32)));
        let bad = PairStatement { c2: &c2_bad, ..stmt };
        assert!(!proof.verify(&p, bad, &t));

        let zero = Exponent::zero();
        let (z1, z2) = make(&zero);
        let zs = PairStatement { pk_t: &pk_t, pk_i: &pk_i, c1: &z1, c2: &z2 };
        let zp = SameExponentPairProof::prove(&p, zs, PairWitness { r: &zero, s1: &s1, s2: &s2 }, &t, &mut rng);
        assert!(zp.verify(&p, zs, &t));
    }

    #[test]
    fn cells_round_trip() {
        let p = GroupParams::generate_seeded(512, 5).unwrap();
        let mut rng = rng_from_bytes(b"cells");
        let t = Transcript::new("x");
        let x = p.random_exponent(&mut rng);
        let stmt = p.encode(&x);
        let s = SchnorrProof::prove(&p, &stmt, &x, &t, &mut rng);
        assert_eq!(SchnorrProof::from_cell(&p, &s.to_cell()).unwrap(), s);
        let g = p.generator();
        let cp = ChaumPedersenProof::prove(
            &p,
            DlogEquality { g: &g, h: &stmt, x1: &stmt, x2: &p.pow(&stmt, &x) },
            &x,
            &t,
            &mut rng,
        );
        assert_eq!(ChaumPedersenProof::from_cell(&p, &cp.to_cell()).unwrap(), cp);
        assert!(SchnorrProof::from_cell(&p, "1:2:3").is_err());
    }
}
