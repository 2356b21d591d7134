//! Vote encoding, ballot encryption and the published vote record.
//!
//! Each distinct vote text in a race gets a fresh random exponent `v`, and
//! is encrypted as `V = g^v`. A record carries the voter's key, their
//! shuffled tracker ciphertext, their `beta`, the encrypted vote, a DSA
//! signature over that ciphertext, and a Schnorr proof of knowledge of its
//! encryption randomness.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;

use crate::dsa::{self, DsaKeyPair, Signature};
use crate::elgamal::{encrypt, Ciphertext};
use crate::group::{Exponent, GroupElement, GroupError, GroupParams};
use crate::proofs::SchnorrProof;
use crate::transcript::Transcript;

/// Separator for ranked ballots: `"A>C>B"` is one distinct vote.
pub const PREFERENCE_SEPARATOR: char = '>';

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum BallotError {
    #[error("vote text {0:?} is not in the vote map")]
    UnknownVote(String),
    #[error("group element {0} does not decode to any vote")]
    UnknownElement(String),
    #[error("vote-map row {row}: {reason}")]
    BadMap { row: usize, reason: String },
    #[error("record row {row}: {fault}")]
    BadRecord { row: usize, fault: RecordFault },
}

/// Why a vote record fails verification.
#[derive(Clone, Debug, thiserror::Error, PartialEq, Eq)]
pub enum RecordFault {
    #[error("bad-element ({0})")]
    BadElement(String),
    #[error("bad-proof")]
    BadProof,
    #[error("bad-signature")]
    BadSignature,
}

impl RecordFault {
    pub fn name(&self) -> &'static str {
        match self {
            RecordFault::BadElement(_) => "bad-element",
            RecordFault::BadProof => "bad-proof",
            RecordFault::BadSignature => "bad-signature",
        }
    }
}

/// Joins a ranking into its canonical vote text.
pub fn canonical_ranking<S: AsRef<str>>(ranking: &[S]) -> String {
    ranking
        .iter()
        .map(|s| s.as_ref())
        .collect::<Vec<_>>()
        .join(&PREFERENCE_SEPARATOR.to_string())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteEntry {
    pub text: String,
    pub v: Exponent,
    pub element: GroupElement,
}

/// Bidirectional map between one race's vote texts and group elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteMap {
    entries: Vec<VoteEntry>,
    by_text: BTreeMap<String, usize>,
    by_element: BTreeMap<GroupElement, usize>,
}

impl VoteMap {
    /// Assigns each distinct text a fresh `v`, in sorted text order.
    pub fn build<'a>(params: &GroupParams, texts: impl IntoIterator<Item = &'a str>, rng: &mut impl RngCore) -> Self {
        let distinct: BTreeSet<&str> = texts.into_iter().collect();
        let mut seen = BTreeSet::new();
        let entries = distinct
            .into_iter()
            .map(|text| loop {
                let v = params.random_nonzero_exponent(rng);
                let element = params.encode(&v);
                if seen.insert(element.clone()) {
                    break VoteEntry {
                        text: text.to_string(),
                        v,
                        element,
                    };
                }
            })
            .collect();
        Self::from_entries(entries).expect("entries are distinct by construction")
    }

    fn from_entries(entries: Vec<VoteEntry>) -> Result<Self, BallotError> {
        let mut by_text = BTreeMap::new();
        let mut by_element = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            let bad = |reason: &str| BallotError::BadMap {
                row: i,
                reason: reason.to_string(),
            };
            if by_text.insert(e.text.clone(), i).is_some() {
                return Err(bad("duplicate vote text"));
            }
            if by_element.insert(e.element.clone(), i).is_some() {
                return Err(bad("duplicate element"));
            }
        }
        Ok(Self {
            entries,
            by_text,
            by_element,
        })
    }

    pub fn entries(&self) -> &[VoteEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn encode(&self, text: &str) -> Result<&GroupElement, BallotError> {
        self.by_text
            .get(text)
            .map(|&i| &self.entries[i].element)
            .ok_or_else(|| BallotError::UnknownVote(text.to_string()))
    }

    pub fn decode(&self, element: &GroupElement) -> Result<&str, BallotError> {
        self.by_element
            .get(element)
            .map(|&i| self.entries[i].text.as_str())
            .ok_or_else(|| BallotError::UnknownElement(element.to_hex()))
    }

    /// `vote_text,v,V`
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["vote_text", "v", "V"]).expect("in-memory write");
        for e in &self.entries {
            w.write_record([e.text.as_str(), &e.v.to_hex(), &e.element.to_hex()])
                .expect("in-memory write");
        }
        w.into_inner().expect("in-memory write")
    }

    /// Parses a published map, checking `V = g^v` on every row.
    pub fn from_csv(params: &GroupParams, bytes: &[u8]) -> Result<Self, BallotError> {
        let mut rdr = csv::Reader::from_reader(bytes);
        let mut entries = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let bad = |reason: String| BallotError::BadMap { row, reason };
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != 3 {
                return Err(bad("expected 3 columns".into()));
            }
            let v = params.exponent_from_hex(&rec[1]).map_err(|e| bad(e.to_string()))?;
            let element = params.element_from_hex(&rec[2]).map_err(|e| bad(e.to_string()))?;
            if params.encode(&v) != element {
                return Err(bad("V differs from g^v".into()));
            }
            entries.push(VoteEntry {
                text: rec[0].to_string(),
                v,
                element,
            });
        }
        Self::from_entries(entries)
    }
}

/// The published per-voter tuple.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteRecord {
    pub pk: GroupElement,
    pub tracker_ct: Ciphertext,
    pub beta: GroupElement,
    pub vote_ct: Ciphertext,
    pub signature: Signature,
    pub proof: SchnorrProof,
}

pub const RECORD_HEADER: [&str; 9] = ["pk", "tr_c1", "tr_c2", "beta", "v_c1", "v_c2", "sig_r", "sig_s", "proof"];

fn ballot_transcript(context: &str, pk_t: &GroupElement, voter_pk: &GroupElement, vote_ct: &Ciphertext) -> Transcript {
    let mut t = Transcript::new(context);
    t.append_element("pk_T", pk_t);
    t.append_element("pk_i", voter_pk);
    t.append_element("c2", &vote_ct.c2);
    t
}

/// Voter key material used when encrypting on the voter's behalf.
#[derive(Clone, Copy, Debug)]
pub struct VoterKeys<'a> {
    pub pk: &'a GroupElement,
    pub dsa: &'a DsaKeyPair,
}

/// Encrypted vote with its proof and signature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedBallot {
    pub vote_ct: Ciphertext,
    pub signature: Signature,
    pub proof: SchnorrProof,
}

#[allow(clippy::too_many_arguments)]
pub fn encrypt_and_sign(
    params: &GroupParams,
    pk_t: &GroupElement,
    map: &VoteMap,
    text: &str,
    voter: VoterKeys<'_>,
    context: &str,
    rng: &mut impl RngCore,
) -> Result<SignedBallot, BallotError> {
    let element = map.encode(text)?;
    let r = params.random_exponent(rng);
    let vote_ct = encrypt(params, pk_t, element, &r);
    let proof = SchnorrProof::prove(
        params,
        &vote_ct.c1,
        &r,
        &ballot_transcript(context, pk_t, voter.pk, &vote_ct),
        rng,
    );
    let signature = dsa::sign(params, voter.dsa, &vote_ct.canonical_bytes(), rng);
    Ok(SignedBallot {
        vote_ct,
        signature,
        proof,
    })
}

impl VoteRecord {
    pub fn new(pk: GroupElement, tracker_ct: Ciphertext, beta: GroupElement, ballot: SignedBallot) -> Self {
        Self {
            pk,
            tracker_ct,
            beta,
            vote_ct: ballot.vote_ct,
            signature: ballot.signature,
            proof: ballot.proof,
        }
    }

    pub fn to_fields(&self) -> [String; 9] {
        [
            self.pk.to_hex(),
            self.tracker_ct.c1.to_hex(),
            self.tracker_ct.c2.to_hex(),
            self.beta.to_hex(),
            self.vote_ct.c1.to_hex(),
            self.vote_ct.c2.to_hex(),
            self.signature.r.to_hex(),
            self.signature.s.to_hex(),
            self.proof.to_cell(),
        ]
    }

    /// Parsing checks subgroup membership of every element.
    pub fn from_fields(params: &GroupParams, f: &csv::StringRecord) -> Result<Self, RecordFault> {
        if f.len() != RECORD_HEADER.len() {
            return Err(RecordFault::BadElement(format!("{} columns", f.len())));
        }
        let bad = |e: GroupError| RecordFault::BadElement(e.to_string());
        let ct = |a: &str, b: &str| Ciphertext::from_parts(params, a, b).map_err(bad);
        Ok(Self {
            pk: params.element_from_hex(&f[0]).map_err(bad)?,
            tracker_ct: ct(&f[1], &f[2])?,
            beta: params.element_from_hex(&f[3]).map_err(bad)?,
            vote_ct: ct(&f[4], &f[5])?,
            signature: Signature {
                r: params.exponent_from_hex(&f[6]).map_err(bad)?,
                s: params.exponent_from_hex(&f[7]).map_err(bad)?,
            },
            proof: SchnorrProof::from_cell(params, &f[8]).map_err(bad)?,
        })
    }

    /// Checks the proof and signature. Does not decrypt and does not look at `beta`.
    pub fn verify(
        &self,
        params: &GroupParams,
        pk_t: &GroupElement,
        dsa_y: &GroupElement,
        context: &str,
    ) -> Result<(), RecordFault> {
        let t = ballot_transcript(context, pk_t, &self.pk, &self.vote_ct);
        if !self.proof.verify(params, &self.vote_ct.c1, &t) {
            return Err(RecordFault::BadProof);
        }
        if !dsa::verify(params, dsa_y, &self.vote_ct.canonical_bytes(), &self.signature) {
            return Err(RecordFault::BadSignature);
        }
        Ok(())
    }
}

pub fn records_to_csv(records: &[VoteRecord]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECORD_HEADER).expect("in-memory write");
    for r in records {
        w.write_record(r.to_fields()).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

pub fn records_from_csv(params: &GroupParams, bytes: &[u8]) -> Result<Vec<VoteRecord>, BallotError> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| BallotError::BadRecord {
            row,
            fault: RecordFault::BadElement(e.to_string()),
        })?;
        out.push(VoteRecord::from_fields(params, &rec).map_err(|fault| BallotError::BadRecord { row, fault })?);
    }
    Ok(out)
}
