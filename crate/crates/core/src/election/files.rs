//! Names and CSV codecs for the files an election publishes.

use crate::elgamal::Ciphertext;
use crate::encoding::join_fields;
use crate::group::{GroupElement, GroupError, GroupParams};
use crate::proofs::SameExponentPairProof;
use crate::teller::{CommitmentShare, DealerBroadcast, PartialDecryption};

pub const PARAMS: &str = "params.csv";
pub const DKG: &str = "dkg.csv";
pub const TRACKERS: &str = "trackers.csv";
pub const VOTERS: &str = "voters.csv";
pub const COMMITMENT_SHARES: &str = "commitment-shares.csv";
pub const BETAS: &str = "betas.csv";
pub const BETA_PROOFS: &str = "betas.csv.proofs";
pub const MIXED: &str = "mixed.csv";
pub const MIXED_PROOFS: &str = "mixed.csv.proofs";
pub const TALLY: &str = "tally.csv";
pub const ALPHAS: &str = "alphas.csv";

pub const TRACKER_PHASE: &str = "trackers";

pub fn vote_map(race: &str) -> String {
    format!("vote-map-{race}.csv")
}

pub fn records(race: &str) -> String {
    format!("records-{race}.csv")
}

pub fn vote_phase(race: &str) -> String {
    format!("votes-{race}")
}

/// The race named by a `records-<race>.csv` file.
pub fn race_of_records(name: &str) -> Option<&str> {
    name.strip_prefix("records-")?.strip_suffix(".csv")
}

/// A published file failed to parse.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("{file}: {reason}")]
pub struct FormatError {
    pub file: String,
    pub reason: String,
}

impl FormatError {
    pub fn new(file: &str, reason: impl ToString) -> Self {
        Self {
            file: file.to_string(),
            reason: reason.to_string(),
        }
    }
}

pub fn write_csv<I, R>(header: &[&str], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory write")
}

/// Rows of `bytes`, after checking the header matches exactly.
pub fn read_csv(file: &str, bytes: &[u8], header: &[&str]) -> Result<Vec<csv::StringRecord>, FormatError> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let found = rdr.headers().map_err(|e| FormatError::new(file, e))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(FormatError::new(file, format!("header {:?}, expected {header:?}", found)));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| FormatError::new(file, e))?;
        if rec.len() != header.len() {
            return Err(FormatError::new(file, format!("row {} has {} columns", rows.len(), rec.len())));
        }
        rows.push(rec);
    }
    Ok(rows)
}

/// Public election parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicParams {
    pub election: String,
    pub params: GroupParams,
    pub tellers: u32,
    pub threshold: u32,
    pub mix_nodes: u32,
    pub pk_t: GroupElement,
}

impl PublicParams {
    pub fn to_csv(&self) -> Vec<u8> {
        let p = &self.params;
        let rows = [
            ["election", self.election.as_str()].map(String::from),
            ["bits".into(), p.bits().to_string()],
            ["p".into(), p.p().to_str_radix(16)],
            ["q".into(), p.q().to_str_radix(16)],
            ["g".into(), p.generator().to_hex()],
            ["tellers".into(), self.tellers.to_string()],
            ["threshold".into(), self.threshold.to_string()],
            ["mix_nodes".into(), self.mix_nodes.to_string()],
            ["pk_t".into(), self.pk_t.to_hex()],
        ];
        write_csv(&["field", "value"], rows)
    }

    /// Parses and fully validates the group.
    pub fn from_csv(bytes: &[u8]) -> Result<Self, FormatError> {
        let bad = |r: &dyn ToString| FormatError::new(PARAMS, r.to_string());
        let rows = read_csv(PARAMS, bytes, &["field", "value"])?;
        let get = |k: &str| {
            rows.iter()
                .find(|r| &r[0] == k)
                .map(|r| r[1].to_string())
                .ok_or_else(|| bad(&format!("missing {k}")))
        };
        let big = |k: &str| -> Result<_, FormatError> { crate::encoding::from_hex(&get(k)?).map_err(|e| bad(&e)) };
        let num = |k: &str| -> Result<u32, FormatError> { get(k)?.parse().map_err(|_| bad(&format!("bad {k}"))) };
        let params = GroupParams::new(big("p")?, big("q")?, big("g")?).map_err(|e| bad(&e))?;
        let bits: u64 = get("bits")?.parse().map_err(|_| bad(&"bad bits"))?;
        if bits != params.bits() {
            return Err(bad(&format!("bits {bits} but p has {}", params.bits())));
        }
        Ok(Self {
            election: get("election")?,
            pk_t: params.element_from_hex(&get("pk_t")?).map_err(|e| bad(&e))?,
            tellers: num("tellers")?,
            threshold: num("threshold")?,
            mix_nodes: num("mix_nodes")?,
            params,
        })
    }
}

pub fn dkg_to_csv(dealers: &[DealerBroadcast]) -> Vec<u8> {
    write_csv(
        &["dealer", "commitments"],
        dealers
            .iter()
            .map(|d| [d.from.to_string(), join_fields(d.commitments.iter().map(GroupElement::to_hex))]),
    )
}

pub fn dkg_from_csv(params: &GroupParams, bytes: &[u8]) -> Result<Vec<DealerBroadcast>, FormatError> {
    let bad = |e: &dyn ToString| FormatError::new(DKG, e.to_string());
    read_csv(DKG, bytes, &["dealer", "commitments"])?
        .iter()
        .map(|r| {
            Ok(DealerBroadcast {
                from: r[0].parse().map_err(|_| bad(&"dealer index"))?,
                commitments: r[1]
                    .split(crate::encoding::FIELD_SEPARATOR)
                    .map(|c| params.element_from_hex(c))
                    .collect::<Result<_, _>>()
                    .map_err(|e| bad(&e))?,
            })
        })
        .collect()
}

/// A row of `voters.csv`: the public half of a voter's registration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicVoter {
    pub pseudonym: String,
    pub pk: GroupElement,
    pub dsa_pk: GroupElement,
    pub beta: GroupElement,
}

pub const VOTERS_HEADER: [&str; 4] = ["pseudonym", "pk", "dsa_pk", "beta"];

pub fn voters_to_csv(voters: &[PublicVoter]) -> Vec<u8> {
    write_csv(
        &VOTERS_HEADER,
        voters
            .iter()
            .map(|v| [v.pseudonym.clone(), v.pk.to_hex(), v.dsa_pk.to_hex(), v.beta.to_hex()]),
    )
}

pub fn voters_from_csv(params: &GroupParams, bytes: &[u8]) -> Result<Vec<PublicVoter>, FormatError> {
    let bad = |e: GroupError| FormatError::new(VOTERS, e);
    read_csv(VOTERS, bytes, &VOTERS_HEADER)?
        .iter()
        .map(|r| {
            Ok(PublicVoter {
                pseudonym: r[0].to_string(),
                pk: params.element_from_hex(&r[1]).map_err(bad)?,
                dsa_pk: params.element_from_hex(&r[2]).map_err(bad)?,
                beta: params.element_from_hex(&r[3]).map_err(bad)?,
            })
        })
        .collect()
}

const SHARES_HEADER: [&str; 7] = ["pseudonym", "teller", "alpha_c1", "alpha_c2", "beta_c1", "beta_c2", "proof"];

/// `shares` pairs each share with its voter's pseudonym.
pub fn shares_to_csv<'a>(shares: impl IntoIterator<Item = (&'a str, &'a CommitmentShare)>) -> Vec<u8> {
    write_csv(
        &SHARES_HEADER,
        shares.into_iter().map(|(p, s)| {
            [
                p.to_string(),
                s.teller.to_string(),
                s.alpha_ct.c1.to_hex(),
                s.alpha_ct.c2.to_hex(),
                s.beta_ct.c1.to_hex(),
                s.beta_ct.c2.to_hex(),
                s.proof.to_cell(),
            ]
        }),
    )
}

/// Shares keyed by pseudonym; `voter_index` maps a pseudonym to its 1-based index.
pub fn shares_from_csv(
    params: &GroupParams,
    bytes: &[u8],
    voter_index: impl Fn(&str) -> Option<u32>,
) -> Result<Vec<(String, CommitmentShare)>, FormatError> {
    let bad = |e: &dyn ToString| FormatError::new(COMMITMENT_SHARES, e.to_string());
    read_csv(COMMITMENT_SHARES, bytes, &SHARES_HEADER)?
        .iter()
        .map(|r| {
            let voter = voter_index(&r[0]).ok_or_else(|| bad(&format!("unknown pseudonym {}", &r[0])))?;
            let ct = |a: &str, b: &str| Ciphertext::from_parts(params, a, b).map_err(|e| bad(&e));
            Ok((
                r[0].to_string(),
                CommitmentShare {
                    voter,
                    teller: r[1].parse().map_err(|_| bad(&"teller index"))?,
                    alpha_ct: ct(&r[2], &r[3])?,
                    beta_ct: ct(&r[4], &r[5])?,
                    proof: SameExponentPairProof::from_cell(params, &r[6]).map_err(|e| bad(&e))?,
                },
            ))
        })
        .collect()
}

pub fn betas_to_csv(rows: &[(String, GroupElement)]) -> Vec<u8> {
    write_csv(&["pseudonym", "beta"], rows.iter().map(|(p, b)| [p.clone(), b.to_hex()]))
}

pub fn betas_from_csv(params: &GroupParams, bytes: &[u8]) -> Result<Vec<(String, GroupElement)>, FormatError> {
    read_csv(BETAS, bytes, &["pseudonym", "beta"])?
        .iter()
        .map(|r| {
            Ok((
                r[0].to_string(),
                params.element_from_hex(&r[1]).map_err(|e| FormatError::new(BETAS, e))?,
            ))
        })
        .collect()
}

pub fn beta_proofs_to_csv(rows: &[(String, PartialDecryption)]) -> Vec<u8> {
    write_csv(
        &["pseudonym", "teller", "partial"],
        rows.iter().map(|(p, d)| [p.clone(), d.teller.to_string(), d.to_cell()]),
    )
}

pub fn beta_proofs_from_csv(
    params: &GroupParams,
    bytes: &[u8],
) -> Result<Vec<(String, PartialDecryption)>, FormatError> {
    let bad = |e: &dyn ToString| FormatError::new(BETA_PROOFS, e.to_string());
    read_csv(BETA_PROOFS, bytes, &["pseudonym", "teller", "partial"])?
        .iter()
        .map(|r| {
            let teller = r[1].parse().map_err(|_| bad(&"teller index"))?;
            Ok((
                r[0].to_string(),
                PartialDecryption::from_cell(params, teller, &r[2]).map_err(|e| bad(&e))?,
            ))
        })
        .collect()
}

/// One decrypted row of the vote mix.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct MixedRow {
    pub tracker: u32,
    pub race: String,
    pub vote_text: String,
}

pub fn mixed_to_csv(rows: &[MixedRow]) -> Vec<u8> {
    write_csv(
        &["tracker", "race", "vote_text"],
        rows.iter()
            .map(|r| [r.tracker.to_string(), r.race.clone(), r.vote_text.clone()]),
    )
}

pub fn mixed_from_csv(bytes: &[u8]) -> Result<Vec<MixedRow>, FormatError> {
    read_csv(MIXED, bytes, &["tracker", "race", "vote_text"])?
        .iter()
        .map(|r| {
            Ok(MixedRow {
                tracker: r[0]
                    .parse()
                    .map_err(|_| FormatError::new(MIXED, format!("tracker {:?}", &r[0])))?,
                race: r[1].to_string(),
                vote_text: r[2].to_string(),
            })
        })
        .collect()
}

/// Which component of a mixed `(tracker, vote)` row a partial decrypts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Component {
    Tracker,
    Vote,
}

impl Component {
    pub fn name(self) -> &'static str {
        match self {
            Component::Tracker => "tracker",
            Component::Vote => "vote",
        }
    }

    pub fn column(self) -> usize {
        self as usize
    }
}

/// A published partial decryption of one mixed ciphertext.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MixedProof {
    pub race: String,
    pub row: usize,
    pub component: Component,
    pub partial: PartialDecryption,
}

const MIXED_PROOFS_HEADER: [&str; 5] = ["race", "row", "component", "teller", "partial"];

pub fn mixed_proofs_to_csv(rows: &[MixedProof]) -> Vec<u8> {
    write_csv(
        &MIXED_PROOFS_HEADER,
        rows.iter().map(|p| {
            [
                p.race.clone(),
                p.row.to_string(),
                p.component.name().to_string(),
                p.partial.teller.to_string(),
                p.partial.to_cell(),
            ]
        }),
    )
}

pub fn mixed_proofs_from_csv(params: &GroupParams, bytes: &[u8]) -> Result<Vec<MixedProof>, FormatError> {
    let bad = |e: &dyn ToString| FormatError::new(MIXED_PROOFS, e.to_string());
    read_csv(MIXED_PROOFS, bytes, &MIXED_PROOFS_HEADER)?
        .iter()
        .map(|r| {
            let component = match &r[2] {
                "tracker" => Component::Tracker,
                "vote" => Component::Vote,
                other => return Err(bad(&format!("component {other:?}"))),
            };
            let teller = r[3].parse().map_err(|_| bad(&"teller index"))?;
            Ok(MixedProof {
                race: r[0].to_string(),
                row: r[1].parse().map_err(|_| bad(&"row index"))?,
                component,
                partial: PartialDecryption::from_cell(params, teller, &r[4]).map_err(|e| bad(&e))?,
            })
        })
        .collect()
}
