//! Teller nodes: Feldman-verified distributed key generation, threshold
//! decryption with Chaum-Pedersen proofs, and the per-voter commitment
//! shares behind each voter's `(alpha, beta)` pair.
//!
//! Each [`Teller`] owns its secrets. Tellers only interact through the
//! message types in this module, which the orchestrator routes in-process.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_bigint::BigUint;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::elgamal::{encrypt, Ciphertext};
use crate::encoding::{join_fields, split_fields};
use crate::group::{Exponent, GroupElement, GroupError, GroupParams};
use crate::proofs::{ChaumPedersenProof, DlogEquality, PairStatement, PairWitness, SameExponentPairProof};
use crate::rng::derive_rng;
use crate::transcript::Transcript;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TellerError {
    #[error("invalid teller configuration: {0}")]
    InvalidConfig(String),
    #[error("teller {by} rejects the share dealt by teller {accused}")]
    Complaint { accused: u32, by: u32 },
    #[error("threshold not met: {have} of {need} partial decryptions")]
    ThresholdNotMet { have: usize, need: usize },
    #[error("partial decryption from teller {teller} fails verification")]
    BadPartial { teller: u32 },
    #[error("teller {teller} already issued a commitment share for voter {voter}")]
    DuplicateShare { voter: u32, teller: u32 },
    #[error("alpha shares cannot be revealed before mixing completes")]
    PhaseOrder,
    #[error("teller {teller} holds no commitment for voter {voter}")]
    UnknownVoter { voter: u32, teller: u32 },
    #[error("key generation has not completed")]
    NotReady,
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// `k`-of-`t` configuration for teller `index` (1-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TellerConfig {
    pub total: u32,
    pub threshold: u32,
    pub index: u32,
}

impl TellerConfig {
    pub fn new(total: u32, threshold: u32, index: u32) -> Result<Self, TellerError> {
        if threshold == 0 || threshold > total {
            return Err(TellerError::InvalidConfig(format!(
                "threshold {threshold} outside 1..={total}"
            )));
        }
        if index == 0 || index > total {
            return Err(TellerError::InvalidConfig(format!("index {index} outside 1..={total}")));
        }
        Ok(Self { total, threshold, index })
    }
}

/// Feldman commitments `g^{a_l}` to one dealer's polynomial.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DealerBroadcast {
    pub from: u32,
    pub commitments: Vec<GroupElement>,
}

/// `f_from(to)`, sent point-to-point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrivateShare {
    pub from: u32,
    pub to: u32,
    pub value: Exponent,
}

/// The public outcome of key generation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThresholdKey {
    pub threshold: u32,
    pub pk: GroupElement,
    /// `g^{s_j}` for `j = 1..=t`, stored at `j - 1`.
    pub public_shares: Vec<GroupElement>,
    pub dealers: Vec<DealerBroadcast>,
}

impl ThresholdKey {
    /// Derives the joint key and every public share from the dealers' commitments.
    pub fn from_broadcasts(
        params: &GroupParams,
        threshold: u32,
        dealers: &[DealerBroadcast],
    ) -> Result<Self, TellerError> {
        let total = dealers.len() as u32;
        let mut sorted = dealers.to_vec();
        sorted.sort_by_key(|d| d.from);
        for (i, d) in sorted.iter().enumerate() {
            if d.from != i as u32 + 1 {
                return Err(TellerError::InvalidConfig(format!("missing dealer {}", i + 1)));
            }
            if d.commitments.len() != threshold as usize {
                return Err(TellerError::Complaint { accused: d.from, by: 0 });
            }
        }
        let pk = params.product(sorted.iter().map(|d| &d.commitments[0]));
        let public_shares = (1..=total)
            .map(|j| {
                let per_dealer: Vec<_> = sorted
                    .iter()
                    .map(|d| feldman_eval(params, &d.commitments, j))
                    .collect();
                params.product(&per_dealer)
            })
            .collect();
        Ok(Self {
            threshold,
            pk,
            public_shares,
            dealers: sorted,
        })
    }

    pub fn total(&self) -> u32 {
        self.public_shares.len() as u32
    }

    pub fn public_share(&self, teller: u32) -> Option<&GroupElement> {
        teller
            .checked_sub(1)
            .and_then(|i| self.public_shares.get(i as usize))
    }
}

/// `prod_l C_l^{x^l}`
fn feldman_eval(params: &GroupParams, commitments: &[GroupElement], x: u32) -> GroupElement {
    let x = params.exponent(x);
    let mut power = params.exponent(1u32);
    let mut acc = params.identity();
    for c in commitments {
        acc = params.mul(&acc, &params.pow(c, &power));
        power = params.exp_mul(&power, &x);
    }
    acc
}

fn poly_eval(params: &GroupParams, coeffs: &[Exponent], x: u32) -> Exponent {
    let x = params.exponent(x);
    coeffs
        .iter()
        .rev()
        .fold(Exponent::zero(), |acc, a| params.exp_add(&params.exp_mul(&acc, &x), a))
}

/// Lagrange coefficient at zero for `index` over `indices`.
pub fn lagrange_at_zero(params: &GroupParams, indices: &[u32], index: u32) -> Exponent {
    let mut num = params.exponent(1u32);
    let mut den = params.exponent(1u32);
    for &m in indices.iter().filter(|&&m| m != index) {
        num = params.exp_mul(&num, &params.exponent(m));
        den = params.exp_mul(&den, &params.exp_sub(&params.exponent(m), &params.exponent(index)));
    }
    params.exp_mul(&num, &params.exp_inv(&den).expect("indices are distinct and below q"))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialDecryption {
    pub teller: u32,
    pub share: GroupElement,
    pub proof: ChaumPedersenProof,
}

impl PartialDecryption {
    pub fn to_cell(&self) -> String {
        join_fields([self.share.to_hex(), self.proof.to_cell()])
    }

    pub fn from_cell(params: &GroupParams, teller: u32, cell: &str) -> Result<Self, GroupError> {
        let (share, proof) = cell
            .split_once(crate::encoding::FIELD_SEPARATOR)
            .ok_or_else(|| GroupError::Encoding(cell.to_string()))?;
        Ok(Self {
            teller,
            share: params.element_from_hex(share)?,
            proof: ChaumPedersenProof::from_cell(params, proof)?,
        })
    }
}

fn partial_transcript(context: &str, teller: u32) -> Transcript {
    let mut t = Transcript::new(context);
    t.append("teller", &teller.to_be_bytes());
    t
}

pub fn verify_partial(
    params: &GroupParams,
    key: &ThresholdKey,
    ct: &Ciphertext,
    partial: &PartialDecryption,
    context: &str,
) -> bool {
    let Some(public_share) = key.public_share(partial.teller) else {
        return false;
    };
    let g = params.generator();
    let stmt = DlogEquality {
        g: &g,
        h: &ct.c1,
        x1: public_share,
        x2: &partial.share,
    };
    partial
        .proof
        .verify(params, stmt, &partial_transcript(context, partial.teller))
}

/// Recombines at least `k` verified partial decryptions into the plaintext.
pub fn combine_partials(
    params: &GroupParams,
    key: &ThresholdKey,
    ct: &Ciphertext,
    partials: &[PartialDecryption],
    context: &str,
) -> Result<GroupElement, TellerError> {
    let mut by_teller = BTreeMap::new();
    for p in partials {
        if !verify_partial(params, key, ct, p, context) {
            return Err(TellerError::BadPartial { teller: p.teller });
        }
        by_teller.entry(p.teller).or_insert(p);
    }
    let need = key.threshold as usize;
    if by_teller.len() < need {
        return Err(TellerError::ThresholdNotMet {
            have: by_teller.len(),
            need,
        });
    }
    let indices: Vec<u32> = by_teller.keys().copied().collect();
    let blinding = params.product(
        &by_teller
            .values()
            .map(|p| params.pow(&p.share, &lagrange_at_zero(params, &indices, p.teller)))
            .collect::<Vec<_>>(),
    );
    Ok(params.div(&ct.c2, &blinding))
}

/// One teller's contribution to voter `voter`'s commitment:
/// `({g^r}_{pk_T}, {pk_i^r}_{pk_T})` plus a proof that both use the same `r`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitmentShare {
    pub voter: u32,
    pub teller: u32,
    pub alpha_ct: Ciphertext,
    pub beta_ct: Ciphertext,
    pub proof: SameExponentPairProof,
}

/// The secrets behind a [`CommitmentShare`].
#[derive(Clone, Debug)]
pub struct CommitmentWitness {
    pub r: Exponent,
    pub s1: Exponent,
    pub s2: Exponent,
}

fn commitment_transcript(context: &str, voter: u32, teller: u32) -> Transcript {
    let mut t = Transcript::new(context);
    t.append("voter", &voter.to_be_bytes());
    t.append("teller", &teller.to_be_bytes());
    t
}

impl CommitmentShare {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        params: &GroupParams,
        pk_t: &GroupElement,
        pk_i: &GroupElement,
        voter: u32,
        teller: u32,
        witness: &CommitmentWitness,
        context: &str,
        rng: &mut impl RngCore,
    ) -> Self {
        let alpha_ct = encrypt(params, pk_t, &params.encode(&witness.r), &witness.s1);
        let beta_ct = encrypt(params, pk_t, &params.pow(pk_i, &witness.r), &witness.s2);
        let stmt = PairStatement {
            pk_t,
            pk_i,
            c1: &alpha_ct,
            c2: &beta_ct,
        };
        let w = PairWitness {
            r: &witness.r,
            s1: &witness.s1,
            s2: &witness.s2,
        };
        let proof = SameExponentPairProof::prove(params, stmt, w, &commitment_transcript(context, voter, teller), rng);
        Self {
            voter,
            teller,
            alpha_ct,
            beta_ct,
            proof,
        }
    }

    pub fn verify(&self, params: &GroupParams, pk_t: &GroupElement, pk_i: &GroupElement, context: &str) -> bool {
        let stmt = PairStatement {
            pk_t,
            pk_i,
            c1: &self.alpha_ct,
            c2: &self.beta_ct,
        };
        self.proof
            .verify(params, stmt, &commitment_transcript(context, self.voter, self.teller))
    }
}

/// `g^{r_{i,j}}` together with the randomness of its published encryption.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphaReveal {
    pub voter: u32,
    pub teller: u32,
    pub alpha_share: GroupElement,
    pub randomness: Exponent,
}

impl AlphaReveal {
    /// True when re-encrypting the revealed value reproduces the published ciphertext.
    pub fn verify(&self, params: &GroupParams, pk_t: &GroupElement, share: &CommitmentShare) -> bool {
        self.voter == share.voter
            && self.teller == share.teller
            && encrypt(params, pk_t, &self.alpha_share, &self.randomness) == share.alpha_ct
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct RetainedAlpha {
    alpha_share: GroupElement,
    randomness: Exponent,
}

/// A single teller node.
#[derive(Clone, Debug)]
pub struct Teller {
    config: TellerConfig,
    params: GroupParams,
    seed: [u8; 32],
    secret_share: Option<Exponent>,
    key: Option<ThresholdKey>,
    retained: BTreeMap<u32, RetainedAlpha>,
    reveals_unlocked: bool,
}

impl Teller {
    pub fn new(params: GroupParams, config: TellerConfig, seed: [u8; 32]) -> Self {
        Self {
            config,
            params,
            seed,
            secret_share: None,
            key: None,
            retained: BTreeMap::new(),
            reveals_unlocked: false,
        }
    }

    pub fn index(&self) -> u32 {
        self.config.index
    }

    pub fn config(&self) -> &TellerConfig {
        &self.config
    }

    pub fn key(&self) -> Option<&ThresholdKey> {
        self.key.as_ref()
    }

    /// This teller's own share `s_j` of the joint secret.
    pub fn secret_share(&self) -> Option<&Exponent> {
        self.secret_share.as_ref()
    }

    fn polynomial(&self) -> Vec<Exponent> {
        let mut rng = derive_rng(&self.seed, "dkg-polynomial");
        (0..self.config.threshold)
            .map(|_| self.params.random_exponent(&mut rng))
            .collect()
    }

    /// Commitments for everyone plus one private share per receiver.
    pub fn deal(&self) -> (DealerBroadcast, Vec<PrivateShare>) {
        let coeffs = self.polynomial();
        let commitments = coeffs.iter().map(|a| self.params.encode(a)).collect();
        let shares = (1..=self.config.total)
            .map(|to| PrivateShare {
                from: self.config.index,
                to,
                value: poly_eval(&self.params, &coeffs, to),
            })
            .collect();
        (
            DealerBroadcast {
                from: self.config.index,
                commitments,
            },
            shares,
        )
    }

    /// Checks every share addressed to this teller against its dealer's
    /// commitments, then derives `s_j` and the joint key.
    pub fn receive(
        &mut self,
        broadcasts: &[DealerBroadcast],
        shares: &[PrivateShare],
    ) -> Result<ThresholdKey, TellerError> {
        let me = self.config.index;
        let mine: BTreeMap<u32, &PrivateShare> = shares.iter().filter(|s| s.to == me).map(|s| (s.from, s)).collect();
        let mut secret = Exponent::zero();
        for b in broadcasts {
            if b.commitments.len() != self.config.threshold as usize {
                return Err(TellerError::Complaint { accused: b.from, by: me });
            }
            let share = mine
                .get(&b.from)
                .ok_or(TellerError::Complaint { accused: b.from, by: me })?;
            if self.params.encode(&share.value) != feldman_eval(&self.params, &b.commitments, me) {
                return Err(TellerError::Complaint { accused: b.from, by: me });
            }
            secret = self.params.exp_add(&secret, &share.value);
        }
        if broadcasts.len() != self.config.total as usize {
            return Err(TellerError::InvalidConfig(format!(
                "expected {} dealers, saw {}",
                self.config.total,
                broadcasts.len()
            )));
        }
        let key = ThresholdKey::from_broadcasts(&self.params, self.config.threshold, broadcasts)?;
        self.secret_share = Some(secret);
        self.key = Some(key.clone());
        Ok(key)
    }

    pub fn partial_decrypt(&self, ct: &Ciphertext, context: &str) -> Result<PartialDecryption, TellerError> {
        let s = self.secret_share.as_ref().ok_or(TellerError::NotReady)?;
        let key = self.key.as_ref().ok_or(TellerError::NotReady)?;
        let me = self.config.index;
        let share = self.params.pow(&ct.c1, s);
        let g = self.params.generator();
        let stmt = DlogEquality {
            g: &g,
            h: &ct.c1,
            x1: &key.public_shares[me as usize - 1],
            x2: &share,
        };
        let mut rng = derive_rng(&self.seed, &format!("partial|{context}|{}", ct.c1.to_hex()));
        let proof = ChaumPedersenProof::prove(&self.params, stmt, s, &partial_transcript(context, me), &mut rng);
        Ok(PartialDecryption {
            teller: me,
            share,
            proof,
        })
    }

    /// Fresh `r_{i,j}` for voter `voter`; `g^{r_{i,j}}` stays with this teller.
    pub fn gen_commitment_share(
        &mut self,
        voter: u32,
        pk_i: &GroupElement,
        context: &str,
    ) -> Result<CommitmentShare, TellerError> {
        let key = self.key.as_ref().ok_or(TellerError::NotReady)?;
        let me = self.config.index;
        if self.retained.contains_key(&voter) {
            return Err(TellerError::DuplicateShare { voter, teller: me });
        }
        let mut rng = derive_rng(&self.seed, &format!("commitment|{context}|{voter}"));
        let witness = CommitmentWitness {
            r: self.params.random_exponent(&mut rng),
            s1: self.params.random_exponent(&mut rng),
            s2: self.params.random_exponent(&mut rng),
        };
        let share = CommitmentShare::build(&self.params, &key.pk, pk_i, voter, me, &witness, context, &mut rng);
        self.retained.insert(
            voter,
            RetainedAlpha {
                alpha_share: self.params.encode(&witness.r),
                randomness: witness.s1,
            },
        );
        Ok(share)
    }

    /// Opens the phase gate for [`Teller::reveal_alpha_share`].
    pub fn unlock_reveals(&mut self) {
        self.reveals_unlocked = true;
    }

    pub fn reveal_alpha_share(&self, voter: u32) -> Result<AlphaReveal, TellerError> {
        if !self.reveals_unlocked {
            return Err(TellerError::PhaseOrder);
        }
        let r = self.retained.get(&voter).ok_or(TellerError::UnknownVoter {
            voter,
            teller: self.config.index,
        })?;
        Ok(AlphaReveal {
            voter,
            teller: self.config.index,
            alpha_share: r.alpha_share.clone(),
            randomness: r.randomness.clone(),
        })
    }

    /// Key/value checkpoint of this teller's own state.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        let c = &self.config;
        let _ = writeln!(out, "index={}", c.index);
        let _ = writeln!(out, "total={}", c.total);
        let _ = writeln!(out, "threshold={}", c.threshold);
        let _ = writeln!(out, "seed={}", hex::encode(self.seed));
        let _ = writeln!(out, "reveals_unlocked={}", self.reveals_unlocked);
        if let Some(s) = &self.secret_share {
            let _ = writeln!(out, "secret_share={}", s.to_hex());
        }
        if let Some(key) = &self.key {
            for d in &key.dealers {
                let cells = d.commitments.iter().map(|c| c.to_hex());
                let _ = writeln!(out, "dealer.{}={}", d.from, join_fields(cells));
            }
        }
        for (voter, r) in &self.retained {
            let _ = writeln!(
                out,
                "alpha.{voter}={}",
                join_fields([r.alpha_share.to_hex(), r.randomness.to_hex()])
            );
        }
        out
    }

    pub fn from_checkpoint(params: GroupParams, text: &str) -> Result<Self, TellerError> {
        let bad = |m: &str| TellerError::Checkpoint(m.to_string());
        let mut kv = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(line))?;
            kv.insert(k.to_string(), v.to_string());
        }
        let num = |k: &str| -> Result<u32, TellerError> {
            kv.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| bad(k))
        };
        let config = TellerConfig::new(num("total")?, num("threshold")?, num("index")?)?;
        let seed: [u8; 32] = kv
            .get("seed")
            .and_then(|s| hex::decode(s).ok())
            .and_then(|b| b.try_into().ok())
            .ok_or_else(|| bad("seed"))?;
        let mut teller = Teller::new(params, config, seed);
        teller.reveals_unlocked = kv.get("reveals_unlocked").map(String::as_str) == Some("true");
        if let Some(s) = kv.get("secret_share") {
            teller.secret_share = Some(teller.params.exponent_from_hex(s)?);
        }
        let mut dealers = Vec::new();
        let mut retained = BTreeMap::new();
        for (k, v) in &kv {
            if let Some(from) = k.strip_prefix("dealer.") {
                let from: u32 = from.parse().map_err(|_| bad(k))?;
                let commitments = split_fields(v, config.threshold as usize)?
                    .into_iter()
                    .map(|c| teller.params.element_from_hex(c))
                    .collect::<Result<_, _>>()?;
                dealers.push(DealerBroadcast { from, commitments });
            } else if let Some(voter) = k.strip_prefix("alpha.") {
                let voter: u32 = voter.parse().map_err(|_| bad(k))?;
                let f = split_fields(v, 2)?;
                retained.insert(
                    voter,
                    RetainedAlpha {
                        alpha_share: teller.params.element_from_hex(f[0])?,
                        randomness: teller.params.exponent_from_hex(f[1])?,
                    },
                );
            }
        }
        if !dealers.is_empty() {
            teller.key = Some(ThresholdKey::from_broadcasts(&teller.params, config.threshold, &dealers)?);
        }
        teller.retained = retained;
        Ok(teller)
    }
}

/// Runs key generation across `tellers`, delivering every message in-process.
///
/// Any share that fails its Feldman check aborts with a complaint naming the dealer.
pub fn dkg_round(tellers: &mut [Teller]) -> Result<ThresholdKey, TellerError> {
    dkg_round_with(tellers, |_| {})
}

/// [`dkg_round`] with a hook that may rewrite private shares in transit.
pub fn dkg_round_with(
    tellers: &mut [Teller],
    mut intercept: impl FnMut(&mut PrivateShare),
) -> Result<ThresholdKey, TellerError> {
    let indices: BTreeSet<u32> = tellers.iter().map(|t| t.config.index).collect();
    if indices.len() != tellers.len() {
        return Err(TellerError::InvalidConfig("duplicate teller index".into()));
    }
    let mut broadcasts = Vec::new();
    let mut shares = Vec::new();
    for t in tellers.iter() {
        let (b, s) = t.deal();
        broadcasts.push(b);
        shares.extend(s);
    }
    for s in shares.iter_mut() {
        intercept(s);
    }
    let mut key = None;
    for t in tellers.iter_mut() {
        let k = t.receive(&broadcasts, &shares)?;
        if key.as_ref().is_some_and(|prev: &ThresholdKey| prev != &k) {
            return Err(TellerError::InvalidConfig("tellers disagree on the joint key".into()));
        }
        key = Some(k);
    }
    key.ok_or_else(|| TellerError::InvalidConfig("no tellers".into()))
}

/// Builds `t` fresh tellers for a `k`-of-`t` configuration, seeding each from `seed`.
pub fn new_tellers(params: &GroupParams, total: u32, threshold: u32, seed: &[u8; 32]) -> Result<Vec<Teller>, TellerError> {
    (1..=total)
        .map(|j| {
            let config = TellerConfig::new(total, threshold, j)?;
            Ok(Teller::new(
                params.clone(),
                config,
                crate::rng::derive_seed(seed, &format!("teller|{j}")),
            ))
        })
        .collect()
}

/// Interpolates a secret from `(index, share)` points. Exposed for audits and tests.
pub fn interpolate_secret(params: &GroupParams, points: &[(u32, Exponent)]) -> Exponent {
    let indices: Vec<u32> = points.iter().map(|(i, _)| *i).collect();
    points.iter().fold(Exponent::zero(), |acc, (i, s)| {
        params.exp_add(&acc, &params.exp_mul(s, &lagrange_at_zero(params, &indices, *i)))
    })
}

#[doc(hidden)]
pub fn exponent_from_u64(params: &GroupParams, v: u64) -> Exponent {
    params.exponent(BigUint::from(v))
}
