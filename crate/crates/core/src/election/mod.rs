//! The election lifecycle over a workspace directory.
//!
//! ```text
//! <workspace>/election.toml          configuration
//! <workspace>/private/state.json     phase, voter keys (never published)
//! <workspace>/private/teller-<j>.kv  teller checkpoints
//! <workspace>/private/*-<race>.csv   imported ballots awaiting the mix
//! <workspace>/wbb/                   the bulletin board
//! <workspace>/exports/               files handed back to the legacy provider
//! ```
//!
//! Phases only move forward. Each operation checks the phase it needs and
//! publishes its whole file set in a single ledger batch, so a failure
//! part-way publishes nothing. Ballots are held privately after import and
//! reach the board together with the mix that consumes them.

pub mod files;
pub mod tally;
mod verify;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::ballot::{encrypt_and_sign, records_from_csv, records_to_csv, BallotError, VoteMap, VoteRecord, VoterKeys};
use crate::dsa::DsaKeyPair;
use crate::elgamal::{reencrypt, Ciphertext, KeyPair};
use crate::group::{GroupElement, GroupError, GroupParams, MIN_MODULUS_BITS};
use crate::mixnet::{mix_file_name, run_mix, verify_mix, MixBatch, MixError, MixFailure, MixNode, Substitution};
use crate::par::par_map;
use crate::rng::{derive_rng, derive_seed, master_seed};
use crate::teller::{
    combine_partials, dkg_round_with, new_tellers, CommitmentShare, PartialDecryption, Teller, TellerError,
    ThresholdKey,
};
use crate::tracker::{
    assemble_alpha, build_beta, generate_trackers, open_commitment, TrackerError, TrackerTable, TRACKER_SPACE,
};
use crate::wbb::{check_name, BoardWriter, LedgerEntry, QuorumConfig, Wbb, WbbError};

use files::{Component, FormatError, MixedProof, MixedRow, PublicParams, PublicVoter};
pub use tally::{RaceTally, TallyResult};
pub use verify::{verify_election, CheckResult, CheckStatus, VerificationReport, CHECK_NAMES};

pub const CONFIG_FILE: &str = "election.toml";
pub const IMPORT_HEADER: [&str; 3] = ["pseudonym", "race", "vote_text"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectionConfig {
    pub election: String,
    pub voters: u32,
    /// Tellers, which double as the mix nodes.
    pub tellers: u32,
    pub threshold: u32,
    pub ledger_nodes: u32,
    pub ledger_quorum: u32,
    pub bits: u64,
    pub seed: u64,
    /// Seats per race; races not listed elect one winner.
    #[serde(default)]
    pub seats: BTreeMap<String, u32>,
}

impl ElectionConfig {
    /// 20 voters, 3-of-4 tellers, a 3-of-4 ledger quorum and 512-bit parameters.
    pub fn demo(seed: u64) -> Self {
        Self {
            election: "demo".into(),
            voters: 20,
            tellers: 4,
            threshold: 3,
            ledger_nodes: 4,
            ledger_quorum: 3,
            bits: 512,
            seed,
            seats: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ElectionError> {
        let bad = |m: String| Err(ElectionError::Config(m));
        if check_name(&self.election).is_err() {
            return bad(format!("election id {:?} must be alphanumeric, '-', '_' or '.'", self.election));
        }
        if self.tellers < 2 {
            return bad(format!("{} teller(s): the mix needs at least 2", self.tellers));
        }
        if self.threshold == 0 || self.threshold > self.tellers {
            return bad(format!("threshold {} outside 1..={}", self.threshold, self.tellers));
        }
        QuorumConfig::new(self.ledger_nodes, self.ledger_quorum).map_err(|e| ElectionError::Config(e.to_string()))?;
        if self.bits < MIN_MODULUS_BITS {
            return bad(format!("{} bits is below the {MIN_MODULUS_BITS}-bit minimum", self.bits));
        }
        if self.voters as usize > TRACKER_SPACE {
            return bad(format!("{} voters exceed the tracker space", self.voters));
        }
        for race in self.seats.keys() {
            if check_name(race).is_err() {
                return bad(format!("race name {race:?} must be alphanumeric, '-', '_' or '.'"));
            }
        }
        Ok(())
    }

    pub fn seats(&self, race: &str) -> u32 {
        self.seats.get(race).copied().unwrap_or(1)
    }

    pub fn from_toml(text: &str) -> Result<Self, ElectionError> {
        let c: Self = toml::from_str(text).map_err(|e| ElectionError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn quorum(&self) -> QuorumConfig {
        QuorumConfig::new(self.ledger_nodes, self.ledger_quorum).expect("validated")
    }

    /// `V001`, `V002`, ... padded to the voter count.
    pub fn pseudonym(&self, index: u32) -> String {
        let width = self.voters.to_string().len().max(3);
        format!("V{index:0width$}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Created,
    KeysReady,
    TrackersMixed,
    CommitmentsIssued,
    VotesImported,
    Mixed,
    Notified,
    Tallied,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Phase::Created => "created",
            Phase::KeysReady => "keys-ready",
            Phase::TrackersMixed => "trackers-mixed",
            Phase::CommitmentsIssued => "commitments-issued",
            Phase::VotesImported => "votes-imported",
            Phase::Mixed => "mixed",
            Phase::Notified => "notified",
            Phase::Tallied => "tallied",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ElectionError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{operation} needs phase {expected}, but the election is {found}")]
    Phase {
        operation: &'static str,
        expected: String,
        found: Phase,
    },
    #[error("import line {line}: {reason}")]
    Import { line: u64, reason: String },
    #[error("teller {teller} is offline")]
    TellerOffline { teller: u32 },
    #[error("mix {phase} failed its audit at {failure}")]
    MixAudit { phase: String, failure: MixFailure },
    #[error("{race} row {row}: {reason}")]
    Decode { race: String, row: usize, reason: String },
    #[error("unknown pseudonym {0}")]
    UnknownVoter(String),
    #[error("{0} has no recorded ballot")]
    NoRecordedBallot(String),
    #[error("integrity alarm: tracker {tracker} opened by {pseudonym} is missing from mixed.csv")]
    TrackerAbsent { pseudonym: String, tracker: u32 },
    #[error("private state: {0}")]
    State(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Teller(#[from] TellerError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Ballot(#[from] BallotError),
    #[error(transparent)]
    Mix(#[from] MixError),
    #[error(transparent)]
    Board(#[from] WbbError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

impl From<std::io::Error> for ElectionError {
    fn from(e: std::io::Error) -> Self {
        ElectionError::Io(e.to_string())
    }
}

/// Broad classes of failure, for exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Verification,
    PhaseOrThreshold,
}

impl ElectionError {
    pub fn class(&self) -> ErrorClass {
        use ElectionError as E;
        match self {
            E::Phase { .. } | E::TellerOffline { .. } => ErrorClass::PhaseOrThreshold,
            E::Teller(TellerError::ThresholdNotMet { .. } | TellerError::PhaseOrder | TellerError::NotReady) => {
                ErrorClass::PhaseOrThreshold
            }
            E::Tracker(
                TrackerError::MissingReveal { .. }
                | TrackerError::MissingShare { .. }
                | TrackerError::Teller(TellerError::ThresholdNotMet { .. }),
            ) => ErrorClass::PhaseOrThreshold,
            E::Config(_) | E::Import { .. } | E::UnknownVoter(_) | E::Io(_) | E::State(_) => ErrorClass::Usage,
            E::Ballot(BallotError::UnknownVote(_)) | E::Group(_) => ErrorClass::Usage,
            E::Board(WbbError::PublishFailed { .. }) => ErrorClass::PhaseOrThreshold,
            _ => ErrorClass::Verification,
        }
    }
}

/// Deliberate misbehavior, for exercising the audits.
#[derive(Clone, Debug, Default)]
pub struct Faults {
    /// Tellers that do not respond. Decryption proceeds if enough remain;
    /// setup and notification need every teller.
    pub offline_tellers: Vec<u32>,
    /// Publish the first tracker twice (a clash).
    pub duplicate_tracker: bool,
    /// Add one to the DKG share sent `(from, to)`.
    pub corrupt_dkg_share: Option<(u32, u32)>,
    pub mix_substitution: Option<MixSubstitution>,
    /// Publish a wrong tracker partial decryption for this mixed row of the first race.
    pub forge_partial: Option<usize>,
    /// Publish even when the operator's own audit fails.
    pub skip_self_audit: bool,
}

/// A mix node swaps one vote ciphertext for a re-encryption of another row's vote.
#[derive(Clone, Copy, Debug)]
pub struct MixSubstitution {
    pub node: u32,
    pub row: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct VoterSecret {
    pseudonym: String,
    keys: KeyPair,
    dsa: DsaKeyPair,
    beta: GroupElement,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PrivateState {
    phase: Phase,
    seed: u64,
    params: GroupParams,
    key: ThresholdKey,
    voters: Vec<VoterSecret>,
    races: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SetupSummary {
    pub voters: usize,
    pub pk_t: String,
    pub published: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ImportSummary {
    pub ballots: usize,
    /// `(race, ballots, distinct votes)`
    pub races: Vec<(String, usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AlphaRow {
    pub pseudonym: String,
    pub alpha: String,
    pub beta: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VoteCheck {
    pub pseudonym: String,
    pub tracker: u32,
    /// `(race, vote_text)` for every mixed row carrying the tracker.
    pub votes: Vec<(String, String)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Status {
    pub election: String,
    pub phase: Phase,
    pub head: String,
    pub entries: Vec<LedgerEntry>,
}

/// An election rooted at a workspace directory.
#[derive(Clone, Debug)]
pub struct Election {
    root: PathBuf,
    config: ElectionConfig,
    faults: Faults,
}

/// Binds a voter's commitment shares and beta decryption to the election and voter.
pub(crate) fn commitment_context(election: &str, pseudonym: &str) -> String {
    format!("{election}|commitment|{pseudonym}")
}

pub(crate) fn ballot_context(election: &str, race: &str) -> String {
    format!("{election}|ballot|{race}")
}

pub(crate) fn decrypt_context(election: &str, race: &str, row: usize, c: Component) -> String {
    format!("{election}|decrypt|{race}|{row}|{}", c.name())
}

impl Election {
    /// Creates the workspace and writes its configuration.
    pub fn init(root: impl AsRef<Path>, config: ElectionConfig) -> Result<Self, ElectionError> {
        config.validate()?;
        let root = root.as_ref().to_path_buf();
        if root.join(CONFIG_FILE).exists() {
            return Err(ElectionError::Config(format!("{} already exists", root.join(CONFIG_FILE).display())));
        }
        for dir in ["private", "wbb", "exports"] {
            fs::create_dir_all(root.join(dir))?;
        }
        fs::write(root.join(CONFIG_FILE), config.to_toml())?;
        Ok(Self {
            root,
            config,
            faults: Faults::default(),
        })
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self, ElectionError> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(CONFIG_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| ElectionError::Config(format!("cannot read {}: {e}", path.display())))?;
        Ok(Self {
            config: ElectionConfig::from_toml(&text)?,
            root,
            faults: Faults::default(),
        })
    }

    pub fn with_faults(mut self, faults: Faults) -> Self {
        self.faults = faults;
        self
    }

    /// Replaces the master seed. Only effective before setup.
    pub fn override_seed(&mut self, seed: u64) {
        self.config.seed = seed;
    }

    pub fn config(&self) -> &ElectionConfig {
        &self.config
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn wbb(&self) -> Result<Wbb, ElectionError> {
        Ok(Wbb::open(self.root.join("wbb"), self.config.quorum())?)
    }

    pub fn exports_dir(&self) -> PathBuf {
        self.root.join("exports")
    }

    fn private(&self, name: &str) -> PathBuf {
        self.root.join("private").join(name)
    }

    pub fn phase(&self) -> Result<Phase, ElectionError> {
        if !self.private("state.json").exists() {
            return Ok(Phase::Created);
        }
        Ok(self.load_state()?.phase)
    }

    fn load_state(&self) -> Result<PrivateState, ElectionError> {
        let text = fs::read_to_string(self.private("state.json"))
            .map_err(|_| ElectionError::Phase {
                operation: "this operation",
                expected: "setup to have run".into(),
                found: Phase::Created,
            })?;
        serde_json::from_str(&text).map_err(|e| ElectionError::State(e.to_string()))
    }

    fn save_state(&self, state: &PrivateState) -> Result<(), ElectionError> {
        fs::create_dir_all(self.root.join("private"))?;
        let text = serde_json::to_string_pretty(state).map_err(|e| ElectionError::State(e.to_string()))?;
        fs::write(self.private("state.json"), text)?;
        Ok(())
    }

    fn require(&self, operation: &'static str, allowed: &[Phase]) -> Result<PrivateState, ElectionError> {
        let found = self.phase()?;
        if !allowed.contains(&found) {
            let expected = allowed.iter().map(Phase::to_string).collect::<Vec<_>>().join(" or ");
            return Err(ElectionError::Phase {
                operation,
                expected,
                found,
            });
        }
        self.load_state()
    }

    fn load_tellers(&self, state: &PrivateState) -> Result<Vec<Teller>, ElectionError> {
        (1..=self.config.tellers)
            .map(|j| {
                let text = fs::read_to_string(self.private(&format!("teller-{j}.kv")))?;
                Ok(Teller::from_checkpoint(state.params.clone(), &text)?)
            })
            .collect()
    }

    fn save_tellers(&self, tellers: &[Teller]) -> Result<(), ElectionError> {
        for t in tellers {
            fs::write(self.private(&format!("teller-{}.kv", t.index())), t.to_checkpoint())?;
        }
        Ok(())
    }

    fn online<'a>(&self, tellers: &'a [Teller]) -> Vec<&'a Teller> {
        tellers
            .iter()
            .filter(|t| !self.faults.offline_tellers.contains(&t.index()))
            .collect()
    }

    fn require_all_online(&self) -> Result<(), ElectionError> {
        match self.faults.offline_tellers.iter().min() {
            Some(&teller) => Err(ElectionError::TellerOffline { teller }),
            None => Ok(()),
        }
    }

    fn decrypting_tellers<'a>(&self, tellers: &'a [Teller]) -> Result<Vec<&'a Teller>, ElectionError> {
        let online = self.online(tellers);
        let need = self.config.threshold as usize;
        if online.len() < need {
            return Err(TellerError::ThresholdNotMet {
                have: online.len(),
                need,
            }
            .into());
        }
        Ok(online.into_iter().take(need).collect())
    }

    fn load_table(&self, params: &GroupParams, bytes: &[u8]) -> Result<TrackerTable, ElectionError> {
        Ok(if self.faults.duplicate_tracker {
            TrackerTable::from_csv_allowing_duplicates(params, bytes)?
        } else {
            TrackerTable::from_csv(params, bytes)?
        })
    }

    fn mix_nodes(&self, seed: &[u8; 32], phase: &str) -> Vec<MixNode> {
        (1..=self.config.tellers)
            .map(|j| MixNode::new(j, derive_rng(seed, &format!("mix|{phase}|node{j}"))))
            .collect()
    }

    /// Key generation, trackers, the tracker mix, commitments and betas.
    pub fn setup(&self) -> Result<SetupSummary, ElectionError> {
        let found = self.phase()?;
        if found != Phase::Created {
            return Err(ElectionError::Phase {
                operation: "setup",
                expected: Phase::Created.to_string(),
                found,
            });
        }
        self.require_all_online()?;
        let cfg = &self.config;
        let e = cfg.election.as_str();
        let seed = master_seed(cfg.seed);
        let params = GroupParams::generate(cfg.bits, &mut derive_rng(&seed, "params"))?;

        let mut tellers = new_tellers(&params, cfg.tellers, cfg.threshold, &derive_seed(&seed, "tellers"))?;
        let corrupt = self.faults.corrupt_dkg_share;
        let key = dkg_round_with(&mut tellers, |s| {
            if corrupt == Some((s.from, s.to)) {
                s.value = params.exp_add(&s.value, &params.exponent(1u32));
            }
        })?;
        // Phase::KeysReady

        let voters: Vec<(String, KeyPair, DsaKeyPair)> = (1..=cfg.voters)
            .map(|i| {
                let mut rng = derive_rng(&seed, &format!("voter|{i}"));
                (cfg.pseudonym(i), KeyPair::generate(&params, &mut rng), DsaKeyPair::generate(&params, &mut rng))
            })
            .collect();
        let mut trackers = generate_trackers(voters.len(), &mut derive_rng(&seed, "trackers"))?;
        let table = if self.faults.duplicate_tracker && trackers.len() >= 2 {
            trackers[1] = trackers[0];
            TrackerTable::build_allowing_duplicates(&params, &key.pk, &trackers)
        } else {
            TrackerTable::build(&params, &key.pk, &trackers)?
        };

        let mut wbb = self.wbb()?;
        let mut stage = wbb.stage(e)?;
        let public = PublicParams {
            election: e.to_string(),
            params: params.clone(),
            tellers: cfg.tellers,
            threshold: cfg.threshold,
            mix_nodes: cfg.tellers,
            pk_t: key.pk.clone(),
        };
        stage.post(files::PARAMS, public.to_csv())?;
        stage.post(files::DKG, files::dkg_to_csv(&key.dealers))?;
        stage.post(files::TRACKERS, table.to_csv())?;

        let input = MixBatch::new(1, table.rows().iter().map(|r| vec![r.ciphertext.clone()]).collect())?;
        let mut nodes = self.mix_nodes(&seed, files::TRACKER_PHASE);
        let run = run_mix(&params, &key.pk, files::TRACKER_PHASE, &input, &mut nodes, &mut stage)?;
        if !self.faults.skip_self_audit {
            verify_mix(&params, &key.pk, files::TRACKER_PHASE, &input, cfg.tellers, &stage).map_err(|failure| {
                ElectionError::MixAudit {
                    phase: files::TRACKER_PHASE.into(),
                    failure,
                }
            })?;
        }
        let assigned: Vec<Ciphertext> = run.output.into_rows().into_iter().map(|mut r| r.remove(0)).collect();
        // Phase::TrackersMixed

        let contexts: Vec<String> = voters.iter().map(|(p, _, _)| commitment_context(e, p)).collect();
        let mut shares: Vec<Vec<CommitmentShare>> = vec![Vec::new(); voters.len()];
        for teller in tellers.iter_mut() {
            for (i, (_, keys, _)) in voters.iter().enumerate() {
                shares[i].push(teller.gen_commitment_share(i as u32 + 1, &keys.pk, &contexts[i])?);
            }
        }
        let decrypting = self.decrypting_tellers(&tellers)?;
        let jobs: Vec<usize> = (0..voters.len()).collect();
        let betas = par_map(&jobs, |&i| {
            build_beta(
                &params,
                &key,
                &voters[i].1.pk,
                &shares[i],
                &assigned[i],
                decrypting.iter().copied(),
                &contexts[i],
            )
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        // Phase::CommitmentsIssued

        let public_voters: Vec<PublicVoter> = voters
            .iter()
            .zip(&betas)
            .map(|((pseudonym, keys, dsa), (beta, _))| PublicVoter {
                pseudonym: pseudonym.clone(),
                pk: keys.pk.clone(),
                dsa_pk: dsa.y.clone(),
                beta: beta.clone(),
            })
            .collect();
        let voters_csv = files::voters_to_csv(&public_voters);
        stage.post(files::VOTERS, voters_csv.clone())?;
        stage.post(
            files::COMMITMENT_SHARES,
            files::shares_to_csv(
                voters
                    .iter()
                    .zip(&shares)
                    .flat_map(|((p, _, _), s)| s.iter().map(move |s| (p.as_str(), s))),
            ),
        )?;
        let beta_rows: Vec<(String, GroupElement)> =
            voters.iter().zip(&betas).map(|((p, _, _), (b, _))| (p.clone(), b.clone())).collect();
        stage.post(files::BETAS, files::betas_to_csv(&beta_rows))?;
        let proof_rows: Vec<(String, PartialDecryption)> = voters
            .iter()
            .zip(&betas)
            .flat_map(|((p, _, _), (_, partials))| partials.iter().map(move |d| (p.clone(), d.clone())))
            .collect();
        stage.post(files::BETA_PROOFS, files::beta_proofs_to_csv(&proof_rows))?;

        let batch = stage.into_batch();
        let published: Vec<String> = batch.names().map(String::from).collect();
        wbb.commit(batch)?;

        fs::create_dir_all(self.exports_dir())?;
        fs::write(self.exports_dir().join(files::VOTERS), voters_csv)?;
        self.save_tellers(&tellers)?;
        self.save_state(&PrivateState {
            phase: Phase::CommitmentsIssued,
            seed: cfg.seed,
            params,
            key: key.clone(),
            voters: voters
                .into_iter()
                .zip(betas)
                .map(|((pseudonym, keys, dsa), (beta, _))| VoterSecret {
                    pseudonym,
                    keys,
                    dsa,
                    beta,
                })
                .collect(),
            races: Vec::new(),
        })?;
        Ok(SetupSummary {
            voters: public_voters.len(),
            pk_t: key.pk.to_hex(),
            published,
        })
    }

    /// The final tracker-mix output: row `i` belongs to voter `i + 1`.
    fn assigned_trackers(&self, wbb: &Wbb, params: &GroupParams) -> Result<Vec<Ciphertext>, ElectionError> {
        let name = mix_file_name(files::TRACKER_PHASE, self.config.tellers, "out");
        let out = MixBatch::from_csv(params, &wbb.get_verified(&self.config.election, &name)?)?;
        Ok(out.into_rows().into_iter().map(|mut r| r.remove(0)).collect())
    }

    /// Reads the legacy export `pseudonym,race,vote_text` and encrypts one
    /// ballot per voter and race. When a voter appears twice in a race, the
    /// later row wins.
    pub fn import_votes(&self, csv_bytes: &[u8]) -> Result<ImportSummary, ElectionError> {
        let mut state = self.require("import-votes", &[Phase::CommitmentsIssued])?;
        let index: BTreeMap<&str, usize> = state
            .voters
            .iter()
            .enumerate()
            .map(|(i, v)| (v.pseudonym.as_str(), i))
            .collect();

        let mut rdr = csv::Reader::from_reader(csv_bytes);
        let header = rdr.headers().map_err(|e| ElectionError::Import {
            line: 1,
            reason: e.to_string(),
        })?;
        if header.iter().ne(IMPORT_HEADER) {
            return Err(ElectionError::Import {
                line: 1,
                reason: format!("header must be exactly {}", IMPORT_HEADER.join(",")),
            });
        }
        let mut ballots: BTreeMap<String, BTreeMap<usize, String>> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| ElectionError::Import {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |reason: String| ElectionError::Import { line, reason };
            let voter = *index
                .get(&rec[0])
                .ok_or_else(|| bad(format!("pseudonym {:?} is not registered", &rec[0])))?;
            let race = &rec[1];
            if check_name(race).is_err() {
                return Err(bad(format!("race {race:?} must be alphanumeric, '-', '_' or '.'")));
            }
            if rec[2].trim().is_empty() {
                return Err(bad("empty vote_text".into()));
            }
            ballots.entry(race.to_string()).or_default().insert(voter, rec[2].to_string());
        }

        let wbb = self.wbb()?;
        let params = &state.params;
        let assigned = self.assigned_trackers(&wbb, params)?;
        let seed = master_seed(state.seed);
        let e = &self.config.election;
        let mut summary = ImportSummary {
            ballots: 0,
            races: Vec::new(),
        };
        for (race, votes) in &ballots {
            let map = VoteMap::build(params, votes.values().map(String::as_str), &mut derive_rng(&seed, &format!("vote-map|{race}")));
            let context = ballot_context(e, race);
            let jobs: Vec<(&usize, &String)> = votes.iter().collect();
            let records = par_map(&jobs, |&(&i, text)| {
                let v = &state.voters[i];
                let mut rng = derive_rng(&seed, &format!("ballot|{race}|{}", v.pseudonym));
                let keys = VoterKeys {
                    pk: &v.keys.pk,
                    dsa: &v.dsa,
                };
                encrypt_and_sign(params, &state.key.pk, &map, text, keys, &context, &mut rng)
                    .map(|b| VoteRecord::new(v.keys.pk.clone(), assigned[i].clone(), v.beta.clone(), b))
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
            fs::write(self.private(&files::vote_map(race)), map.to_csv())?;
            fs::write(self.private(&files::records(race)), records_to_csv(&records))?;
            summary.ballots += records.len();
            summary.races.push((race.clone(), records.len(), map.len()));
        }
        state.races = ballots.keys().cloned().collect();
        state.phase = Phase::VotesImported;
        self.save_state(&state)?;
        Ok(summary)
    }

    /// Publishes the ballots, mixes each race and threshold-decrypts the result.
    pub fn mix_and_decrypt(&self) -> Result<Vec<MixedRow>, ElectionError> {
        let mut state = self.require("mix", &[Phase::VotesImported])?;
        let params = &state.params;
        let pk_t = &state.key.pk;
        let e = self.config.election.as_str();
        let seed = master_seed(state.seed);
        let tellers = self.load_tellers(&state)?;
        let decrypting = self.decrypting_tellers(&tellers)?;

        let mut wbb = self.wbb()?;
        let table = self.load_table(params, &wbb.get_verified(e, files::TRACKERS)?)?;
        let mut stage = wbb.stage(e)?;
        let mut mixed = Vec::new();
        let mut proofs = Vec::new();
        for (race_index, race) in state.races.iter().enumerate() {
            let map_bytes = fs::read(self.private(&files::vote_map(race)))?;
            let map = VoteMap::from_csv(params, &map_bytes)?;
            let record_bytes = fs::read(self.private(&files::records(race)))?;
            let records = records_from_csv(params, &record_bytes)?;
            stage.post(&files::vote_map(race), map_bytes)?;
            stage.post(&files::records(race), record_bytes)?;

            let phase = files::vote_phase(race);
            let input = MixBatch::new(
                2,
                records
                    .iter()
                    .map(|r| vec![r.tracker_ct.clone(), r.vote_ct.clone()])
                    .collect(),
            )?;
            let mut nodes = self.mix_nodes(&seed, &phase);
            if let (0, Some(s)) = (race_index, self.faults.mix_substitution) {
                if input.len() >= 2 {
                    let source = &input.rows()[(s.row + 1) % input.len()][1];
                    let mut rng = derive_rng(&seed, "fault|substitution");
                    let replacement = reencrypt(params, pk_t, source, &params.random_exponent(&mut rng));
                    if let Some(node) = nodes.iter_mut().find(|n| n.index == s.node) {
                        *node = node.clone().with_substitution(Substitution {
                            row: s.row % input.len(),
                            column: 1,
                            replacement,
                        });
                    }
                }
            }
            let run = run_mix(params, pk_t, &phase, &input, &mut nodes, &mut stage)?;
            if !self.faults.skip_self_audit {
                verify_mix(params, pk_t, &phase, &input, self.config.tellers, &stage)
                    .map_err(|failure| ElectionError::MixAudit { phase: phase.clone(), failure })?;
            }

            let rows: Vec<(usize, &Vec<Ciphertext>)> = run.output.rows().iter().enumerate().collect();
            let decrypted = par_map(&rows, |&(row, cts)| -> Result<_, ElectionError> {
                let mut elements = Vec::new();
                let mut partials = Vec::new();
                for c in [Component::Tracker, Component::Vote] {
                    let ct = &cts[c.column()];
                    let context = decrypt_context(e, race, row, c);
                    let ps = decrypting
                        .iter()
                        .map(|t| t.partial_decrypt(ct, &context))
                        .collect::<Result<Vec<_>, _>>()?;
                    elements.push(combine_partials(params, &state.key, ct, &ps, &context)?);
                    partials.extend(ps.into_iter().map(|p| (c, p)));
                }
                let decode = |reason: String| ElectionError::Decode {
                    race: race.clone(),
                    row,
                    reason,
                };
                let tracker = table
                    .lookup(&elements[0])
                    .ok_or_else(|| decode("tracker element is not in trackers.csv".into()))?;
                let vote_text = map.decode(&elements[1]).map_err(|err| decode(err.to_string()))?;
                Ok((
                    MixedRow {
                        tracker,
                        race: race.clone(),
                        vote_text: vote_text.to_string(),
                    },
                    partials,
                ))
            });
            for (row, result) in decrypted.into_iter().enumerate() {
                let (mixed_row, partials) = result?;
                mixed.push(mixed_row);
                for (component, mut partial) in partials {
                    let forged = race_index == 0
                        && self.faults.forge_partial == Some(row)
                        && component == Component::Tracker
                        && partial.teller == decrypting[0].index();
                    if forged {
                        partial.share = params.mul(&partial.share, &params.generator());
                    }
                    proofs.push(MixedProof {
                        race: race.clone(),
                        row,
                        component,
                        partial,
                    });
                }
            }
        }
        stage.post(files::MIXED, files::mixed_to_csv(&mixed))?;
        stage.post(files::MIXED_PROOFS, files::mixed_proofs_to_csv(&proofs))?;
        let batch = stage.into_batch();
        wbb.commit(batch)?;
        state.phase = Phase::Mixed;
        self.save_state(&state)?;
        Ok(mixed)
    }

    /// Collects every teller's alpha share and writes `exports/alphas.csv`.
    pub fn notify(&self) -> Result<Vec<AlphaRow>, ElectionError> {
        let mut state = self.require("notify", &[Phase::Mixed])?;
        let params = &state.params;
        let mut tellers = self.load_tellers(&state)?;
        if let Some(&teller) = self.faults.offline_tellers.iter().min() {
            return Err(TrackerError::MissingReveal { teller }.into());
        }
        for t in tellers.iter_mut() {
            t.unlock_reveals();
        }
        let wbb = self.wbb()?;
        let e = &self.config.election;
        let index: BTreeMap<&str, u32> = state
            .voters
            .iter()
            .enumerate()
            .map(|(i, v)| (v.pseudonym.as_str(), i as u32 + 1))
            .collect();
        let shares = files::shares_from_csv(params, &wbb.get_verified(e, files::COMMITMENT_SHARES)?, |p| {
            index.get(p).copied()
        })?;
        let mut by_voter: BTreeMap<u32, Vec<CommitmentShare>> = BTreeMap::new();
        for (_, s) in shares {
            by_voter.entry(s.voter).or_default().push(s);
        }
        let mut rows = Vec::new();
        for (i, v) in state.voters.iter().enumerate() {
            let voter = i as u32 + 1;
            let reveals = tellers
                .iter()
                .map(|t| t.reveal_alpha_share(voter))
                .collect::<Result<Vec<_>, _>>()?;
            let voter_shares = by_voter.get(&voter).map(Vec::as_slice).unwrap_or_default();
            let alpha = assemble_alpha(params, &state.key.pk, voter_shares, &reveals)?;
            rows.push(AlphaRow {
                pseudonym: v.pseudonym.clone(),
                alpha: alpha.to_hex(),
                beta: v.beta.to_hex(),
            });
        }
        fs::create_dir_all(self.exports_dir())?;
        fs::write(
            self.exports_dir().join(files::ALPHAS),
            files::write_csv(
                &["pseudonym", "alpha", "beta"],
                rows.iter().map(|r| [r.pseudonym.as_str(), &r.alpha, &r.beta]),
            ),
        )?;
        self.save_tellers(&tellers)?;
        state.phase = Phase::Notified;
        self.save_state(&state)?;
        Ok(rows)
    }

    /// Counts `mixed.csv` and publishes `tally.csv`.
    pub fn tally(&self) -> Result<TallyResult, ElectionError> {
        let mut state = self.require("tally", &[Phase::Mixed, Phase::Notified])?;
        let mut wbb = self.wbb()?;
        let e = self.config.election.clone();
        let mixed = files::mixed_from_csv(&wbb.get_verified(&e, files::MIXED)?)?;
        let result = tally::count(&mixed, |race| self.config.seats(race));
        wbb.publish(&e, files::TALLY, result.to_csv())?;
        state.phase = Phase::Tallied;
        self.save_state(&state)?;
        Ok(result)
    }

    /// Runs every public check against the board.
    pub fn verify_election(&self) -> Result<VerificationReport, ElectionError> {
        Ok(verify_election(&self.wbb()?, &self.config.election))
    }

    /// Opens `(alpha, beta)` with the voter's key and finds the tracker's rows in `mixed.csv`.
    pub fn verify_vote(
        &self,
        pseudonym: &str,
        alpha: &GroupElement,
        beta: &GroupElement,
    ) -> Result<VoteCheck, ElectionError> {
        let state = self.require("verify-vote", &[Phase::Mixed, Phase::Notified, Phase::Tallied])?;
        let voter = state
            .voters
            .iter()
            .find(|v| v.pseudonym == pseudonym)
            .ok_or_else(|| ElectionError::UnknownVoter(pseudonym.to_string()))?;
        let wbb = self.wbb()?;
        let e = &self.config.election;
        let params = &state.params;
        let table = self.load_table(params, &wbb.get_verified(e, files::TRACKERS)?)?;
        let tracker = open_commitment(params, &voter.keys.sk, alpha, beta, &table)?;
        let mixed = files::mixed_from_csv(&wbb.get_verified(e, files::MIXED)?)?;
        let votes: Vec<(String, String)> = mixed
            .iter()
            .filter(|r| r.tracker == tracker)
            .map(|r| (r.race.clone(), r.vote_text.clone()))
            .collect();
        if votes.is_empty() {
            let mut cast = false;
            for race in &state.races {
                let records = records_from_csv(params, &wbb.get_verified(e, &files::records(race))?)?;
                cast |= records.iter().any(|r| r.pk == voter.keys.pk);
            }
            return Err(if cast {
                ElectionError::TrackerAbsent {
                    pseudonym: pseudonym.to_string(),
                    tracker,
                }
            } else {
                ElectionError::NoRecordedBallot(pseudonym.to_string())
            });
        }
        Ok(VoteCheck {
            pseudonym: pseudonym.to_string(),
            tracker,
            votes,
        })
    }

    /// The voter's `(alpha, beta)` from `exports/alphas.csv`.
    pub fn exported_alpha(&self, pseudonym: &str) -> Result<(GroupElement, GroupElement), ElectionError> {
        let state = self.require("verify-vote", &[Phase::Notified, Phase::Tallied])?;
        let bytes = fs::read(self.exports_dir().join(files::ALPHAS))?;
        let rows = files::read_csv(files::ALPHAS, &bytes, &["pseudonym", "alpha", "beta"])?;
        let row = rows
            .iter()
            .find(|r| &r[0] == pseudonym)
            .ok_or_else(|| ElectionError::UnknownVoter(pseudonym.to_string()))?;
        Ok((state.params.element_from_hex(&row[1])?, state.params.element_from_hex(&row[2])?))
    }

    /// The voter's secret key. For trapdoor demonstrations and tests only.
    #[doc(hidden)]
    pub fn voter_secret(&self, pseudonym: &str) -> Result<crate::group::Exponent, ElectionError> {
        let state = self.load_state()?;
        state
            .voters
            .iter()
            .find(|v| v.pseudonym == pseudonym)
            .map(|v| v.keys.sk.clone())
            .ok_or_else(|| ElectionError::UnknownVoter(pseudonym.to_string()))
    }

    pub fn params(&self) -> Result<GroupParams, ElectionError> {
        Ok(self.load_state()?.params)
    }

    pub fn status(&self) -> Result<Status, ElectionError> {
        let wbb = self.wbb()?;
        let e = &self.config.election;
        Ok(Status {
            election: e.clone(),
            phase: self.phase()?,
            head: wbb.head_hash(e),
            entries: wbb.entries(e),
        })
    }
}

/// A seeded plaintext export: every voter votes once in `race`, cycling
/// through `candidates` with a seeded shuffle.
pub fn sample_votes(config: &ElectionConfig, race: &str, candidates: &[&str], seed: u64) -> Vec<u8> {
    let mut rng = derive_rng(&master_seed(seed), "sample-votes");
    files::write_csv(
        &IMPORT_HEADER,
        (1..=config.voters).map(|i| {
            let c = candidates[(rng.next_u32() as usize) % candidates.len()];
            [config.pseudonym(i), race.to_string(), c.to_string()]
        }),
    )
}
