//! Trackers and the per-voter `(alpha, beta)` commitments that point to them.
//!
//! Every tracker `n` is published as `(n, g^n, Enc(g^n; r = 1))`. The fixed
//! encryption randomness lets anyone recompute the table. After the tracker
//! mix, voter `i` is bound to a shuffled tracker ciphertext. Their
//! commitment is `beta_i = pk_i^{r_i} * g^{n}` and `alpha_i = g^{r_i}`, where
//! `r_i` sums one secret contribution from every teller.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;

use crate::elgamal::{encrypt, homomorphic_product, Ciphertext};
use crate::group::{Exponent, GroupElement, GroupError, GroupParams};
use crate::teller::{combine_partials, AlphaReveal, CommitmentShare, PartialDecryption, Teller, TellerError, ThresholdKey};

pub const TRACKER_MIN: u32 = 10_000_000;
pub const TRACKER_END: u32 = 100_000_000;
pub const TRACKER_SPACE: usize = (TRACKER_END - TRACKER_MIN) as usize;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TrackerError {
    #[error("cannot draw {requested} distinct trackers from a space of {TRACKER_SPACE}")]
    SpaceExhausted { requested: usize },
    #[error("tracker {0} appears more than once")]
    Duplicate(u32),
    #[error("tracker {0} is not in the tracker table")]
    UnknownTracker(u32),
    #[error("commitment does not open to any tracker in the table")]
    OpeningFailed,
    #[error("no commitment share from teller {teller}")]
    MissingShare { teller: u32 },
    #[error("commitment share from teller {teller} fails its proof")]
    ShareProof { teller: u32 },
    #[error("teller {teller} did not reveal its alpha share")]
    MissingReveal { teller: u32 },
    #[error("alpha share revealed by teller {teller} does not match its commitment")]
    RevealMismatch { teller: u32 },
    #[error("trackers.csv row {row} differs from its recomputation")]
    NotRecomputable { row: usize },
    #[error(transparent)]
    Teller(#[from] TellerError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// Draws `count` distinct 8-digit trackers.
pub fn generate_trackers(count: usize, rng: &mut impl RngCore) -> Result<Vec<u32>, TrackerError> {
    if count > TRACKER_SPACE {
        return Err(TrackerError::SpaceExhausted { requested: count });
    }
    Ok(rand::seq::index::sample(rng, TRACKER_SPACE, count)
        .into_iter()
        .map(|i| TRACKER_MIN + i as u32)
        .collect())
}

/// The publicly recomputable encryption of a tracker element.
pub fn trivial_ciphertext(params: &GroupParams, pk_t: &GroupElement, element: &GroupElement) -> Ciphertext {
    encrypt(params, pk_t, element, &params.exponent(1u32))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrackerRow {
    pub n: u32,
    pub element: GroupElement,
    pub ciphertext: Ciphertext,
}

/// The published tracker table with reverse lookup from `g^n` to `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrackerTable {
    rows: Vec<TrackerRow>,
    by_element: BTreeMap<GroupElement, u32>,
}

impl TrackerTable {
    pub fn build(params: &GroupParams, pk_t: &GroupElement, trackers: &[u32]) -> Result<Self, TrackerError> {
        let rows = trackers
            .iter()
            .map(|&n| {
                let element = params.encode(&params.exponent(n));
                let ciphertext = trivial_ciphertext(params, pk_t, &element);
                TrackerRow { n, element, ciphertext }
            })
            .collect();
        Self::from_rows(rows)
    }

    /// Like [`TrackerTable::build`] but keeps duplicates, which then share
    /// one lookup entry. Only for injecting clash faults.
    #[doc(hidden)]
    pub fn build_allowing_duplicates(params: &GroupParams, pk_t: &GroupElement, trackers: &[u32]) -> Self {
        let mut table = Self::build(params, pk_t, &[]).expect("empty table");
        for &n in trackers {
            let element = params.encode(&params.exponent(n));
            let ciphertext = trivial_ciphertext(params, pk_t, &element);
            table.by_element.entry(element.clone()).or_insert(n);
            table.rows.push(TrackerRow { n, element, ciphertext });
        }
        table
    }

    fn from_rows(rows: Vec<TrackerRow>) -> Result<Self, TrackerError> {
        let mut by_element = BTreeMap::new();
        for row in &rows {
            if by_element.insert(row.element.clone(), row.n).is_some() {
                return Err(TrackerError::Duplicate(row.n));
            }
        }
        Ok(Self { rows, by_element })
    }

    pub fn rows(&self) -> &[TrackerRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn lookup(&self, element: &GroupElement) -> Option<u32> {
        self.by_element.get(element).copied()
    }

    pub fn element_of(&self, n: u32) -> Option<&GroupElement> {
        self.rows.iter().find(|r| r.n == n).map(|r| &r.element)
    }

    /// Checks every row against an independent recomputation.
    pub fn verify_recomputation(&self, params: &GroupParams, pk_t: &GroupElement) -> Result<(), TrackerError> {
        for (i, row) in self.rows.iter().enumerate() {
            let element = params.encode(&params.exponent(row.n));
            if element != row.element || trivial_ciphertext(params, pk_t, &element) != row.ciphertext {
                return Err(TrackerError::NotRecomputable { row: i });
            }
        }
        Ok(())
    }

    /// `n,g_n,c1,c2`
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["n", "g_n", "c1", "c2"]).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.n.to_string(),
                r.element.to_hex(),
                r.ciphertext.c1.to_hex(),
                r.ciphertext.c2.to_hex(),
            ])
            .expect("in-memory write");
        }
        w.into_inner().expect("in-memory write")
    }

    /// Parses a published table. Duplicates are rejected here, so a
    /// table that parses is already clash-free.
    pub fn from_csv(params: &GroupParams, bytes: &[u8]) -> Result<Self, TrackerError> {
        Self::from_rows(Self::parse_rows(params, bytes)?)
    }

    #[doc(hidden)]
    pub fn from_csv_allowing_duplicates(params: &GroupParams, bytes: &[u8]) -> Result<Self, TrackerError> {
        let rows = Self::parse_rows(params, bytes)?;
        let mut by_element = BTreeMap::new();
        for row in &rows {
            by_element.entry(row.element.clone()).or_insert(row.n);
        }
        Ok(Self { rows, by_element })
    }

    fn parse_rows(params: &GroupParams, bytes: &[u8]) -> Result<Vec<TrackerRow>, TrackerError> {
        let mut rdr = csv::Reader::from_reader(bytes);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| GroupError::Encoding(e.to_string()))?;
            if rec.len() != 4 {
                return Err(GroupError::Encoding(format!("trackers.csv row {}", rows.len())).into());
            }
            let n = rec[0]
                .parse()
                .map_err(|_| GroupError::Encoding(format!("tracker {:?}", &rec[0])))?;
            rows.push(TrackerRow {
                n,
                element: params.element_from_hex(&rec[1])?,
                ciphertext: Ciphertext::from_parts(params, &rec[2], &rec[3])?,
            });
        }
        Ok(rows)
    }
}

/// Checks that `shares` holds exactly one verifying share per teller `1..=total`.
pub fn check_shares(
    params: &GroupParams,
    pk_t: &GroupElement,
    pk_i: &GroupElement,
    total: u32,
    shares: &[CommitmentShare],
    context: &str,
) -> Result<(), TrackerError> {
    let present: BTreeSet<u32> = shares.iter().map(|s| s.teller).collect();
    if let Some(teller) = (1..=total).find(|j| !present.contains(j)) {
        return Err(TrackerError::MissingShare { teller });
    }
    for s in shares {
        if s.teller == 0 || s.teller > total || !s.verify(params, pk_t, pk_i, context) {
            return Err(TrackerError::ShareProof { teller: s.teller });
        }
    }
    if shares.len() != total as usize {
        let dup = shares.iter().map(|s| s.teller).find(|t| shares.iter().filter(|s| s.teller == *t).count() > 1);
        return Err(TrackerError::ShareProof {
            teller: dup.unwrap_or(0),
        });
    }
    Ok(())
}

/// `Enc(beta_i)`: the product of every teller's `{pk_i^r}` with the voter's tracker ciphertext.
pub fn beta_ciphertext(params: &GroupParams, shares: &[CommitmentShare], tracker_ct: &Ciphertext) -> Ciphertext {
    homomorphic_product(params, shares.iter().map(|s| &s.beta_ct).chain([tracker_ct]))
}

/// Builds `beta_i` by threshold-decrypting [`beta_ciphertext`] with `tellers`.
pub fn build_beta<'a>(
    params: &GroupParams,
    key: &ThresholdKey,
    pk_i: &GroupElement,
    shares: &[CommitmentShare],
    tracker_ct: &Ciphertext,
    tellers: impl IntoIterator<Item = &'a Teller>,
    context: &str,
) -> Result<(GroupElement, Vec<PartialDecryption>), TrackerError> {
    check_shares(params, &key.pk, pk_i, key.total(), shares, context)?;
    let ct = beta_ciphertext(params, shares, tracker_ct);
    let partials = tellers
        .into_iter()
        .take(key.threshold as usize)
        .map(|t| t.partial_decrypt(&ct, context))
        .collect::<Result<Vec<_>, _>>()?;
    let beta = combine_partials(params, key, &ct, &partials, context)?;
    Ok((beta, partials))
}

/// `alpha_i = prod_j g^{r_{i,j}}`, after checking each reveal against its share.
pub fn assemble_alpha(
    params: &GroupParams,
    pk_t: &GroupElement,
    shares: &[CommitmentShare],
    reveals: &[AlphaReveal],
) -> Result<GroupElement, TrackerError> {
    let mut parts = Vec::with_capacity(shares.len());
    for share in shares {
        let reveal = reveals
            .iter()
            .find(|r| r.teller == share.teller)
            .ok_or(TrackerError::MissingReveal { teller: share.teller })?;
        if !reveal.verify(params, pk_t, share) {
            return Err(TrackerError::RevealMismatch { teller: share.teller });
        }
        parts.push(&reveal.alpha_share);
    }
    Ok(params.product(parts))
}

/// Decrypts `(alpha, beta)` under `sk_i` and looks the result up in the table.
pub fn open_commitment(
    params: &GroupParams,
    sk_i: &Exponent,
    alpha: &GroupElement,
    beta: &GroupElement,
    table: &TrackerTable,
) -> Result<u32, TrackerError> {
    let m = params.div(beta, &params.pow(alpha, sk_i));
    table.lookup(&m).ok_or(TrackerError::OpeningFailed)
}

/// A fake `alpha'` that opens `beta` to `target` under `sk_i`.
pub fn forge_alpha(
    params: &GroupParams,
    sk_i: &Exponent,
    beta: &GroupElement,
    target: u32,
    table: &TrackerTable,
) -> Result<GroupElement, TrackerError> {
    let element = table.element_of(target).ok_or(TrackerError::UnknownTracker(target))?;
    let inv = params.exp_inv(sk_i)?;
    Ok(params.pow(&params.div(beta, element), &inv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elgamal::{decrypt, KeyPair};
    use crate::rng::{master_seed, rng_from_bytes};
    use crate::teller::{dkg_round, new_tellers, CommitmentWitness};
    use num_bigint::BigUint;

    fn pow_mod(b: u64, e: u64, m: u64) -> u64 {
        (0..e).fold(1, |acc, _| acc * b % m)
    }

    fn toy_el(v: u32) -> GroupElement {
        GroupParams::toy().element(BigUint::from(v)).unwrap()
    }

    fn toy_pk() -> GroupElement {
        toy_el(18)
    }

    #[test]
    fn generates_distinct_eight_digit_trackers() {
        let mut rng = rng_from_bytes(b"7");
        assert!(generate_trackers(0, &mut rng).unwrap().is_empty());
        let t = generate_trackers(1000, &mut rng).unwrap();
        assert_eq!(t.iter().collect::<BTreeSet<_>>().len(), 1000);
        assert!(t.iter().all(|n| n.to_string().len() == 8));
        assert_eq!(
            generate_trackers(90_000_001, &mut rng),
            Err(TrackerError::SpaceExhausted { requested: 90_000_001 })
        );
        assert_eq!(generate_trackers(5, &mut rng_from_bytes(b"s")), generate_trackers(5, &mut rng_from_bytes(b"s")));
    }

    #[test]
    fn toy_table_row() {
        let params = GroupParams::toy();
        let table = TrackerTable::build(&params, &toy_pk(), &[5]).unwrap();
        let g_n = pow_mod(4, 5, 23);
        assert_eq!(g_n, 12);
        let row = &table.rows()[0];
        assert_eq!(row.element, toy_el(g_n as u32));
        assert_eq!(row.ciphertext.c1, toy_el(4));
        assert_eq!(row.ciphertext.c2, toy_el((18 * g_n % 23) as u32));
        assert_eq!(row.ciphertext.c2, toy_el(9));
        table.verify_recomputation(&params, &toy_pk()).unwrap();
        assert_eq!(TrackerTable::from_csv(&params, &table.to_csv()).unwrap(), table);
    }

    #[test]
    fn duplicates_rejected() {
        let params = GroupParams::toy();
        assert_eq!(
            TrackerTable::build(&params, &toy_pk(), &[5, 3, 5]).unwrap_err(),
            TrackerError::Duplicate(5)
        );
    }

    #[test]
    fn edited_row_not_recomputable() {
        let params = GroupParams::toy();
        let mut table = TrackerTable::build(&params, &toy_pk(), &[1, 2, 3]).unwrap();
        table.rows[1].ciphertext.c1 = toy_el(16);
        assert_eq!(
            table.verify_recomputation(&params, &toy_pk()),
            Err(TrackerError::NotRecomputable { row: 1 })
        );
    }

    #[test]
    fn toy_open_and_forge() {
        let params = GroupParams::toy();
        // trackers 1..=9 give the elements 4^n mod 23
        let table = TrackerTable::build(&params, &toy_pk(), &(1..=9).collect::<Vec<_>>()).unwrap();
        let sk = params.exponent(3u32);
        // alpha = g^2, beta = pk^2 * g^5
        let alpha = pow_mod(4, 2, 23);
        let beta = pow_mod(18, 2, 23) * 12 % 23;
        assert_eq!((alpha, beta), (16, 1));
        assert_eq!(open_commitment(&params, &sk, &toy_el(16), &toy_el(1), &table), Ok(5));
        assert_eq!(open_commitment(&params, &sk, &params.identity(), &toy_el(12), &table), Ok(5));

        // target element 9 = 4^8: alpha' = (1 * 9^-1)^(3^-1 mod 11)
        assert_eq!(pow_mod(4, 8, 23), 9);
        let nine_inv = (1..23).find(|x| x * 9 % 23 == 1).unwrap();
        let three_inv = (1..11).find(|x| x * 3 % 11 == 1).unwrap();
        let expected = pow_mod(nine_inv, three_inv, 23);
        assert_eq!(expected, 4);
        let forged = forge_alpha(&params, &sk, &toy_el(1), 8, &table).unwrap();
        assert_eq!(forged, toy_el(4));
        assert_eq!(open_commitment(&params, &sk, &forged, &toy_el(1), &table), Ok(8));
        assert_eq!(forge_alpha(&params, &sk, &toy_el(1), 5, &table).unwrap(), toy_el(16));
        assert_eq!(
            forge_alpha(&params, &sk, &toy_el(1), 10, &table),
            Err(TrackerError::UnknownTracker(10))
        );
    }

    #[test]
    fn opening_outside_table_fails() {
        let params = GroupParams::toy();
        let table = TrackerTable::build(&params, &toy_pk(), &[5]).unwrap();
        assert_eq!(
            open_commitment(&params, &params.exponent(4u32), &toy_el(16), &toy_el(1), &table),
            Err(TrackerError::OpeningFailed)
        );
    }

    fn single_teller() -> (GroupParams, Vec<Teller>, ThresholdKey) {
        let params = GroupParams::toy();
        let mut tellers = new_tellers(&params, 1, 1, &master_seed(1)).unwrap();
        let key = dkg_round(&mut tellers).unwrap();
        (params, tellers, key)
    }

    #[test]
    fn toy_beta_and_alpha_single_teller() {
        let (params, tellers, key) = single_teller();
        let pk_i = toy_pk();
        let witness = CommitmentWitness {
            r: params.exponent(2u32),
            s1: params.exponent(6u32),
            s2: params.exponent(9u32),
        };
        let mut rng = rng_from_bytes(b"b");
        let share = CommitmentShare::build(&params, &key.pk, &pk_i, 1, 1, &witness, "ctx", &mut rng);
        let tracker_ct = trivial_ciphertext(&params, &key.pk, &toy_el(12));
        let (beta, partials) = build_beta(&params, &key, &pk_i, &[share.clone()], &tracker_ct, &tellers, "ctx").unwrap();
        assert_eq!(beta, toy_el(1));
        assert_eq!(partials.len(), 1);

        let reveal = AlphaReveal {
            voter: 1,
            teller: 1,
            alpha_share: toy_el(16),
            randomness: params.exponent(6u32),
        };
        assert_eq!(assemble_alpha(&params, &key.pk, &[share.clone()], &[reveal.clone()]), Ok(toy_el(16)));
        let wrong = AlphaReveal {
            alpha_share: toy_el(2),
            ..reveal
        };
        assert_eq!(
            assemble_alpha(&params, &key.pk, &[share.clone()], &[wrong]),
            Err(TrackerError::RevealMismatch { teller: 1 })
        );
        assert_eq!(
            assemble_alpha(&params, &key.pk, &[share], &[]),
            Err(TrackerError::MissingReveal { teller: 1 })
        );
    }

    #[test]
    fn zero_randomness_beta_is_tracker() {
        let (params, tellers, key) = single_teller();
        let pk_i = toy_pk();
        let zero = CommitmentWitness {
            r: Exponent::zero(),
            s1: Exponent::zero(),
            s2: Exponent::zero(),
        };
        let share = CommitmentShare::build(&params, &key.pk, &pk_i, 1, 1, &zero, "z", &mut rng_from_bytes(b"z"));
        let tracker_ct = trivial_ciphertext(&params, &key.pk, &toy_el(12));
        let (beta, _) = build_beta(&params, &key, &pk_i, &[share], &tracker_ct, &tellers, "z").unwrap();
        assert_eq!(beta, toy_el(12));
    }

    #[test]
    fn full_pipeline_at_512_bits() {
        let params = GroupParams::generate_seeded(512, 3).unwrap();
        let mut tellers = new_tellers(&params, 4, 3, &master_seed(2)).unwrap();
        let key = dkg_round(&mut tellers).unwrap();
        let mut rng = rng_from_bytes(b"pipe");
        let voter = KeyPair::generate(&params, &mut rng);
        let trackers = generate_trackers(3, &mut rng).unwrap();
        let table = TrackerTable::build(&params, &key.pk, &trackers).unwrap();
        let tracker_ct = table.rows()[1].ciphertext.clone();

        let mut shares: Vec<CommitmentShare> = tellers
            .iter_mut()
            .map(|t| t.gen_commitment_share(7, &voter.pk, "e|setup").unwrap())
            .collect();
        let (beta, _) = build_beta(&params, &key, &voter.pk, &shares, &tracker_ct, &tellers[1..], "e|setup").unwrap();

        // alpha via threshold decryption of the product of alpha shares
        let alpha_ct = homomorphic_product(&params, shares.iter().map(|s| &s.alpha_ct));
        let partials: Vec<_> = tellers[..3].iter().map(|t| t.partial_decrypt(&alpha_ct, "x").unwrap()).collect();
        let alpha_direct = combine_partials(&params, &key, &alpha_ct, &partials, "x").unwrap();

        for t in &mut tellers {
            t.unlock_reveals();
        }
        let reveals: Vec<_> = tellers.iter().map(|t| t.reveal_alpha_share(7).unwrap()).collect();
        let alpha = assemble_alpha(&params, &key.pk, &shares, &reveals).unwrap();
        assert_eq!(alpha, alpha_direct);
        assert_eq!(open_commitment(&params, &voter.sk, &alpha, &beta, &table), Ok(trackers[1]));
        assert_eq!(decrypt(&params, &voter.sk, &Ciphertext { c1: alpha.clone(), c2: beta.clone() }), table.rows()[1].element);

        for n in &trackers {
            let fake = forge_alpha(&params, &voter.sk, &beta, *n, &table).unwrap();
            assert_eq!(open_commitment(&params, &voter.sk, &fake, &beta, &table), Ok(*n));
        }

        shares[2].beta_ct.c2 = params.mul(&shares[2].beta_ct.c2, &params.generator());
        assert_eq!(
            build_beta(&params, &key, &voter.pk, &shares, &tracker_ct, &tellers, "e|setup").unwrap_err(),
            TrackerError::ShareProof { teller: 3 }
        );
        assert_eq!(
            build_beta(&params, &key, &voter.pk, &shares[..3], &tracker_ct, &tellers, "e|setup").unwrap_err(),
            TrackerError::MissingShare { teller: 4 }
        );
    }
}
