//! Prime-order subgroup arithmetic over `Z_p^*`.
//!
//! Every value in the system is either a [`GroupElement`] (a member of the
//! order-`q` subgroup generated by `g`) or an [`Exponent`] (an integer
//! reduced mod `q`). Elements can only be built through checked
//! constructors, so holding a `GroupElement` implies subgroup membership.

use std::fmt;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::encoding::{from_hex, to_hex};
use crate::rng::rng_from_bytes;

/// Smallest modulus accepted by [`GroupParams::generate`].
pub const MIN_MODULUS_BITS: u64 = 256;
/// Modulus size used by the test profile.
pub const TEST_MODULUS_BITS: u64 = 512;
/// Modulus size used by the production profile.
pub const PRODUCTION_MODULUS_BITS: u64 = 3072;
/// Miller-Rabin rounds applied to every prime we generate or accept.
pub const MILLER_RABIN_ROUNDS: usize = 64;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("modulus of {0} bits is below the {MIN_MODULUS_BITS}-bit minimum")]
    ModulusTooSmall(u64),
    #[error("p is not prime")]
    ModulusNotPrime,
    #[error("q is not prime")]
    OrderNotPrime,
    #[error("q does not divide p - 1")]
    OrderDoesNotDivide,
    #[error("g does not generate the order-q subgroup")]
    BadGenerator,
    #[error("value is not a member of the order-q subgroup")]
    NotInSubgroup,
    #[error("exponent has no inverse mod q")]
    NotInvertible,
    #[error("malformed integer encoding: {0:?}")]
    Encoding(String),
}

/// A Schnorr group: the order-`q` subgroup of `Z_p^*` generated by `g`.
#[derive(Clone, PartialEq, Eq)]
pub struct GroupParams {
    p: BigUint,
    q: BigUint,
    g: BigUint,
    bits: u64,
}

/// A member of the order-`q` subgroup.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement(BigUint);

/// An integer in `[0, q)`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Exponent(BigUint);

impl GroupParams {
    /// Validates and wraps an explicit `(p, q, g)` triple.
    pub fn new(p: BigUint, q: BigUint, g: BigUint) -> Result<Self, GroupError> {
        if !is_probable_prime(&p, MILLER_RABIN_ROUNDS) {
            return Err(GroupError::ModulusNotPrime);
        }
        if !is_probable_prime(&q, MILLER_RABIN_ROUNDS) {
            return Err(GroupError::OrderNotPrime);
        }
        if !(&p - 1u32).is_multiple_of(&q) {
            return Err(GroupError::OrderDoesNotDivide);
        }
        if g <= BigUint::one() || g >= p || !g.modpow(&q, &p).is_one() {
            return Err(GroupError::BadGenerator);
        }
        let bits = p.bits();
        Ok(Self { p, q, g, bits })
    }

    /// The toy group `p = 23, q = 11, g = 4`, small enough to enumerate.
    pub fn toy() -> Self {
        Self::new(23u32.into(), 11u32.into(), 4u32.into()).expect("toy group is valid")
    }

    /// Generates fresh parameters with a `bits`-bit modulus.
    ///
    /// The subgroup order is 256 bits for moduli of 512 bits and up, 160 bits
    /// below that. Output is a deterministic function of the RNG stream.
    pub fn generate(bits: u64, rng: &mut impl RngCore) -> Result<Self, GroupError> {
        if bits < MIN_MODULUS_BITS {
            return Err(GroupError::ModulusTooSmall(bits));
        }
        let q_bits = if bits >= 512 { 256 } else { 160 };
        let q = random_prime(q_bits, rng);
        let k_bits = bits - q_bits;
        let p = loop {
            let mut k = rng.gen_biguint(k_bits);
            k.set_bit(k_bits - 1, true);
            k.set_bit(0, false);
            let p = &k * &q + 1u32;
            if p.bits() != bits || !passes_trial_division(&p) {
                continue;
            }
            if is_probable_prime(&p, MILLER_RABIN_ROUNDS) {
                break p;
            }
        };
        let cofactor = (&p - 1u32) / &q;
        let mut h = BigUint::from(2u32);
        let g = loop {
            let g = h.modpow(&cofactor, &p);
            if !g.is_one() {
                break g;
            }
            h += 1u32;
        };
        Ok(Self { p, q, g, bits })
    }

    /// [`GroupParams::generate`] driven by a seed.
    pub fn generate_seeded(bits: u64, seed: u64) -> Result<Self, GroupError> {
        let mut rng = rng_from_bytes(&[b"group-params".as_slice(), &seed.to_le_bytes()].concat());
        Self::generate(bits, &mut rng)
    }

    pub fn p(&self) -> &BigUint {
        &self.p
    }

    pub fn q(&self) -> &BigUint {
        &self.q
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn generator(&self) -> GroupElement {
        GroupElement(self.g.clone())
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement(BigUint::one())
    }

    /// Checked element constructor: fails unless `value^q = 1 mod p`.
    pub fn element(&self, value: BigUint) -> Result<GroupElement, GroupError> {
        if value.is_zero() || value >= self.p || !value.modpow(&self.q, &self.p).is_one() {
            return Err(GroupError::NotInSubgroup);
        }
        Ok(GroupElement(value))
    }

    pub fn element_from_hex(&self, s: &str) -> Result<GroupElement, GroupError> {
        self.element(from_hex(s)?)
    }

    /// Reduces an arbitrary integer into an exponent.
    pub fn exponent(&self, value: impl Into<BigUint>) -> Exponent {
        Exponent(value.into() % &self.q)
    }

    /// Parses an exponent, rejecting values outside `[0, q)`.
    pub fn exponent_from_hex(&self, s: &str) -> Result<Exponent, GroupError> {
        let v = from_hex(s)?;
        if v >= self.q {
            return Err(GroupError::Encoding(format!("exponent {s} is not below q")));
        }
        Ok(Exponent(v))
    }

    pub fn random_exponent(&self, rng: &mut impl RngCore) -> Exponent {
        Exponent(rng.gen_biguint_below(&self.q))
    }

    /// Uniform in `[1, q)`.
    pub fn random_nonzero_exponent(&self, rng: &mut impl RngCore) -> Exponent {
        Exponent(rng.gen_biguint_range(&BigUint::one(), &self.q))
    }

    /// Maps an exponent into the group as `g^e`.
    pub fn encode(&self, e: &Exponent) -> GroupElement {
        GroupElement(self.g.modpow(&e.0, &self.p))
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement((&a.0 * &b.0) % &self.p)
    }

    pub fn pow(&self, base: &GroupElement, e: &Exponent) -> GroupElement {
        GroupElement(base.0.modpow(&e.0, &self.p))
    }

    pub fn inv(&self, a: &GroupElement) -> GroupElement {
        // a^(q-1) = a^-1 inside the order-q subgroup.
        GroupElement(a.0.modpow(&(&self.q - 1u32), &self.p))
    }

    pub fn div(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        self.mul(a, &self.inv(b))
    }

    pub fn product<'a>(&self, items: impl IntoIterator<Item = &'a GroupElement>) -> GroupElement {
        items
            .into_iter()
            .fold(self.identity(), |acc, x| self.mul(&acc, x))
    }

    pub fn exp_add(&self, a: &Exponent, b: &Exponent) -> Exponent {
        Exponent((&a.0 + &b.0) % &self.q)
    }

    pub fn exp_sub(&self, a: &Exponent, b: &Exponent) -> Exponent {
        Exponent((&a.0 + &self.q - &b.0) % &self.q)
    }

    pub fn exp_mul(&self, a: &Exponent, b: &Exponent) -> Exponent {
        Exponent((&a.0 * &b.0) % &self.q)
    }

    pub fn exp_neg(&self, a: &Exponent) -> Exponent {
        Exponent((&self.q - &a.0) % &self.q)
    }

    pub fn exp_inv(&self, a: &Exponent) -> Result<Exponent, GroupError> {
        if a.0.is_zero() {
            return Err(GroupError::NotInvertible);
        }
        // q is prime.
        Ok(Exponent(a.0.modpow(&(&self.q - 2u32), &self.q)))
    }

    /// Short fingerprint of the parameters, used to bind transcripts.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for v in [&self.p, &self.q, &self.g] {
            let bytes = v.to_bytes_be();
            h.update((bytes.len() as u64).to_be_bytes());
            h.update(bytes);
        }
        h.finalize().into()
    }
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("bits", &self.bits)
            .field("q_bits", &self.q.bits())
            .finish_non_exhaustive()
    }
}

impl GroupElement {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        to_hex(&self.0)
    }

    pub fn is_identity(&self) -> bool {
        self.0.is_one()
    }
}

impl Exponent {
    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        to_hex(&self.0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn zero() -> Self {
        Self(BigUint::zero())
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({})", self.0)
    }
}

impl fmt::Debug for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Exponent({})", self.0)
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

// Serde impls write lowercase hex. Deserialization cannot check membership
// without the parameters; callers re-validate via `GroupParams::element`.
impl Serialize for GroupElement {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for GroupElement {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        from_hex(&s).map(Self).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        from_hex(&s).map(Self).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    p: String,
    q: String,
    g: String,
}

impl Serialize for GroupParams {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ParamsRepr {
            p: to_hex(&self.p),
            q: to_hex(&self.q),
            g: to_hex(&self.g),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GroupParams {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = ParamsRepr::deserialize(d)?;
        let parse = |s: &str| from_hex(s).map_err(serde::de::Error::custom);
        GroupParams::new(parse(&r.p)?, parse(&r.q)?, parse(&r.g)?).map_err(serde::de::Error::custom)
    }
}

const SMALL_PRIMES: [u32; 54] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

fn passes_trial_division(n: &BigUint) -> bool {
    SMALL_PRIMES.iter().all(|&sp| {
        let sp = BigUint::from(sp);
        *n == sp || !(n % &sp).is_zero()
    })
}

fn random_prime(bits: u64, rng: &mut impl RngCore) -> BigUint {
    loop {
        let mut c = rng.gen_biguint(bits);
        c.set_bit(bits - 1, true);
        c.set_bit(0, true);
        if passes_trial_division(&c) && is_probable_prime(&c, MILLER_RABIN_ROUNDS) {
            return c;
        }
    }
}

/// Miller-Rabin with bases drawn from a stream seeded by `n` itself, so the
/// verdict for a given `n` is reproducible.
pub fn is_probable_prime(n: &BigUint, rounds: usize) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for &sp in &SMALL_PRIMES {
        let sp = BigUint::from(sp);
        if *n == sp {
            return true;
        }
        if (n % &sp).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> s;
    let mut rng: ChaCha20Rng = rng_from_bytes(&[b"miller-rabin".as_slice(), &n.to_bytes_be()].concat());
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_subgroup(p: u64, g: u64) -> Vec<u64> {
        let mut out = vec![1];
        let mut x = g % p;
        while x != 1 {
            out.push(x);
            x = x * g % p;
        }
        out
    }

    #[test]
    fn toy_group_is_accepted_and_generator_has_order_eleven() {
        let toy = GroupParams::toy();
        assert_eq!(brute_force_subgroup(23, 4).len(), 11);
        assert_eq!(toy.bits(), 5);
    }

    #[test]
    fn generator_outside_subgroup_rejected() {
        // 5^11 mod 23 = 22
        assert_eq!(
            GroupParams::new(23u32.into(), 11u32.into(), 5u32.into()),
            Err(GroupError::BadGenerator)
        );
        assert_eq!(
            GroupParams::new(23u32.into(), 11u32.into(), 1u32.into()),
            Err(GroupError::BadGenerator)
        );
    }

    #[test]
    fn non_dividing_order_rejected() {
        assert_eq!(
            GroupParams::new(23u32.into(), 7u32.into(), 4u32.into()),
            Err(GroupError::OrderDoesNotDivide)
        );
        assert_eq!(
            GroupParams::new(21u32.into(), 5u32.into(), 4u32.into()),
            Err(GroupError::ModulusNotPrime)
        );
    }

    #[test]
    fn encode_matches_modpow_oracle() {
        let toy = GroupParams::toy();
        let enc = |e: u32| toy.encode(&toy.exponent(e)).value().clone();
        assert_eq!(enc(0), 1u32.into());
        assert_eq!(enc(5), 12u32.into());
        assert_eq!(enc(8), 9u32.into());
    }

    #[test]
    fn encode_is_injective_on_toy_group() {
        let toy = GroupParams::toy();
        let mut seen: Vec<_> = (0u32..11).map(|e| toy.encode(&toy.exponent(e))).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 11);
    }

    #[test]
    fn membership_enforced() {
        let toy = GroupParams::toy();
        let members = brute_force_subgroup(23, 4);
        for v in 0u64..30 {
            let ok = toy.element(BigUint::from(v)).is_ok();
            assert_eq!(ok, members.contains(&v), "value {v}");
        }
    }

    #[test]
    fn small_modulus_rejected() {
        assert_eq!(
            GroupParams::generate_seeded(128, 1),
            Err(GroupError::ModulusTooSmall(128))
        );
    }

    #[test]
    fn generated_params_validate_and_are_deterministic() {
        let a = GroupParams::generate_seeded(512, 1).unwrap();
        let b = GroupParams::generate_seeded(512, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bits(), 512);
        assert_eq!(a.q().bits(), 256);
        let again = GroupParams::new(a.p().clone(), a.q().clone(), a.generator().value().clone());
        assert_eq!(again.unwrap(), a);
        assert_ne!(a, GroupParams::generate_seeded(512, 2).unwrap());
    }

    #[test]
    fn exponent_inverse() {
        let toy = GroupParams::toy();
        let three = toy.exponent(3u32);
        let inv = toy.exp_inv(&three).unwrap();
        assert_eq!(inv.value(), &BigUint::from(4u32));
        assert_eq!(toy.exp_inv(&Exponent::zero()), Err(GroupError::NotInvertible));
    }

    #[test]
    fn primality_known_values() {
        for n in [2u64, 3, 5, 101, 7919, 2_147_483_647] {
            assert!(is_probable_prime(&n.into(), 16), "{n}");
        }
        for n in [0u64, 1, 4, 561, 1105, 7917, 2_147_483_649] {
            assert!(!is_probable_prime(&n.into(), 16), "{n}");
        }
    }
}
