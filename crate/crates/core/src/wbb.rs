//! The web bulletin board: a data lake of published files plus a SHA-256
//! hash chain replicated over simulated quorum nodes.
//!
//! On-disk layout under the board root:
//!
//! ```text
//! lake/<election>/<file>
//! ledger/node<j>/ledger-<election>.csv      seq,name,sha256,prev_hash
//! ```
//!
//! An entry is committed once at least `K` of `N` nodes acknowledge it.
//! Reads use the quorum-agreed chain and always re-hash the stored file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoding::sha256_hex;

pub const GENESIS_HASH: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum WbbError {
    #[error("append-only violation: {name} is already published")]
    AppendOnly { name: String },
    #[error("publish failed: {acks} acknowledgements, {needed} needed")]
    PublishFailed { acks: u32, needed: u32 },
    #[error("integrity violation: {name} does not match its ledger hash")]
    IntegrityViolation { name: String },
    #[error("no quorum agreement for {name}")]
    Unavailable { name: String },
    #[error("{name} is not published")]
    NotFound { name: String },
    #[error("{name} is recorded on the ledger but missing from the data lake")]
    MissingFile { name: String },
    #[error("ledger head moved while the batch was staged")]
    StaleBatch,
    #[error("invalid name {0:?}")]
    InvalidName(String),
    #[error("invalid quorum configuration: {0}")]
    InvalidQuorum(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for WbbError {
    fn from(e: std::io::Error) -> Self {
        WbbError::Io(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub seq: u64,
    pub election: String,
    pub name: String,
    pub sha256: String,
    pub prev_hash: String,
}

impl LedgerEntry {
    /// `seq|election|name|sha256|prev` fields joined by newlines.
    pub fn canonical_encoding(&self) -> String {
        format!(
            "{}\n{}\n{}\n{}\n{}",
            self.seq, self.election, self.name, self.sha256, self.prev_hash
        )
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.canonical_encoding().as_bytes())
    }

    fn next(prev: Option<&LedgerEntry>, election: &str, name: &str, bytes: &[u8]) -> Self {
        Self {
            seq: prev.map_or(0, |p| p.seq + 1),
            election: election.to_string(),
            name: name.to_string(),
            sha256: sha256_hex(bytes),
            prev_hash: prev.map_or_else(|| GENESIS_HASH.to_string(), LedgerEntry::hash),
        }
    }
}

/// `N` ledger nodes, `K` acknowledgements per commit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuorumConfig {
    pub nodes: u32,
    pub threshold: u32,
}

impl QuorumConfig {
    /// Requires `K > 2N/3` and `K <= N`.
    pub fn new(nodes: u32, threshold: u32) -> Result<Self, WbbError> {
        if nodes == 0 || threshold > nodes || 3 * threshold <= 2 * nodes {
            return Err(WbbError::InvalidQuorum(format!(
                "threshold {threshold} of {nodes} nodes must exceed two thirds"
            )));
        }
        Ok(Self { nodes, threshold })
    }
}

/// Read access to published files.
pub trait BoardReader {
    fn entry(&self, name: &str) -> Result<LedgerEntry, WbbError>;
    fn read(&self, name: &str) -> Result<Vec<u8>, WbbError>;

    fn read_string(&self, name: &str) -> Result<String, WbbError> {
        String::from_utf8(self.read(name)?).map_err(|_| WbbError::IntegrityViolation { name: name.to_string() })
    }

    fn contains(&self, name: &str) -> bool {
        self.entry(name).is_ok()
    }
}

/// Append access. Each post returns the entry it appended.
pub trait BoardWriter {
    fn post(&mut self, name: &str, bytes: Vec<u8>) -> Result<LedgerEntry, WbbError>;
}

/// File and election names: ASCII alphanumerics plus `-`, `_` and `.`.
pub fn check_name(name: &str) -> Result<(), WbbError> {
    let ok = !name.is_empty()
        && name != "."
        && name != ".."
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'));
    if ok {
        Ok(())
    } else {
        Err(WbbError::InvalidName(name.to_string()))
    }
}

/// A single-party in-memory board, for tests and the browser demo.
#[derive(Clone, Debug, Default)]
pub struct MemoryBoard {
    election: String,
    entries: Vec<(LedgerEntry, Vec<u8>)>,
}

impl MemoryBoard {
    pub fn new(election: &str) -> Self {
        Self {
            election: election.to_string(),
            entries: Vec::new(),
        }
    }

    pub fn head_hash(&self) -> String {
        self.entries
            .last()
            .map_or_else(|| GENESIS_HASH.to_string(), |(e, _)| e.hash())
    }

    /// Overwrites a stored file without touching the ledger.
    #[doc(hidden)]
    pub fn tamper(&mut self, name: &str, bytes: Vec<u8>) {
        if let Some((_, b)) = self.entries.iter_mut().find(|(e, _)| e.name == name) {
            *b = bytes;
        }
    }
}

impl BoardReader for MemoryBoard {
    fn entry(&self, name: &str) -> Result<LedgerEntry, WbbError> {
        self.entries
            .iter()
            .find(|(e, _)| e.name == name)
            .map(|(e, _)| e.clone())
            .ok_or_else(|| WbbError::NotFound { name: name.to_string() })
    }

    fn read(&self, name: &str) -> Result<Vec<u8>, WbbError> {
        let (e, b) = self
            .entries
            .iter()
            .find(|(e, _)| e.name == name)
            .ok_or_else(|| WbbError::NotFound { name: name.to_string() })?;
        if sha256_hex(b) != e.sha256 {
            return Err(WbbError::IntegrityViolation { name: name.to_string() });
        }
        Ok(b.clone())
    }
}

impl BoardWriter for MemoryBoard {
    fn post(&mut self, name: &str, bytes: Vec<u8>) -> Result<LedgerEntry, WbbError> {
        check_name(name)?;
        if self.contains(name) {
            return Err(WbbError::AppendOnly { name: name.to_string() });
        }
        let entry = LedgerEntry::next(self.entries.last().map(|(e, _)| e), &self.election, name, &bytes);
        self.entries.push((entry.clone(), bytes));
        Ok(entry)
    }
}

/// Status of one node's copy of an election's chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum NodeStatus {
    Consistent,
    Down,
    Unreadable { detail: String },
    /// The node's own chain does not link from genesis.
    BrokenChain { seq: u64 },
    /// The node disagrees with the quorum value at `seq`.
    Divergent { seq: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FileStatus {
    Ok,
    HashMismatch,
    Missing,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EntryAudit {
    pub seq: u64,
    pub name: String,
    pub sha256: String,
    pub agreeing_nodes: u32,
    pub file: FileStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NodeAudit {
    pub node: u32,
    #[serde(flatten)]
    pub status: NodeStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LedgerAudit {
    pub election: String,
    pub head: String,
    pub entries: Vec<EntryAudit>,
    pub nodes: Vec<NodeAudit>,
}

impl LedgerAudit {
    /// True when every file verifies and no reachable node disagrees with the quorum.
    pub fn is_ok(&self) -> bool {
        self.entries.iter().all(|e| e.file == FileStatus::Ok)
            && self
                .nodes
                .iter()
                .all(|n| matches!(n.status, NodeStatus::Consistent | NodeStatus::Down))
    }

    /// Human-readable description of every finding.
    pub fn findings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for e in &self.entries {
            match e.file {
                FileStatus::Ok => {}
                FileStatus::HashMismatch => out.push(format!("{}: hash mismatch", e.name)),
                FileStatus::Missing => out.push(format!("{}: missing from data lake (unverifiable)", e.name)),
            }
        }
        for n in &self.nodes {
            match &n.status {
                NodeStatus::Consistent | NodeStatus::Down => {}
                NodeStatus::Unreadable { detail } => out.push(format!("node{}: unreadable ({detail})", n.node)),
                NodeStatus::BrokenChain { seq } => out.push(format!("node{}: broken chain at seq {seq}", n.node)),
                NodeStatus::Divergent { seq } => out.push(format!("node{}: diverges from quorum at seq {seq}", n.node)),
            }
        }
        out
    }
}

/// The quorum-replicated board.
#[derive(Debug)]
pub struct Wbb {
    root: PathBuf,
    quorum: QuorumConfig,
    up: Vec<bool>,
}

type NodeChain = Result<Vec<LedgerEntry>, String>;

impl Wbb {
    /// Opens (creating if needed) a board rooted at `root`.
    pub fn open(root: impl AsRef<Path>, quorum: QuorumConfig) -> Result<Self, WbbError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("lake"))?;
        for j in 1..=quorum.nodes {
            fs::create_dir_all(root.join("ledger").join(format!("node{j}")))?;
        }
        Ok(Self {
            root,
            quorum,
            up: vec![true; quorum.nodes as usize],
        })
    }

    pub fn quorum(&self) -> QuorumConfig {
        self.quorum
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Marks node `node` (1-based) reachable or not.
    pub fn set_node_up(&mut self, node: u32, up: bool) {
        if let Some(slot) = self.up.get_mut(node as usize - 1) {
            *slot = up;
        }
    }

    pub fn node_ledger_path(&self, node: u32, election: &str) -> PathBuf {
        self.root
            .join("ledger")
            .join(format!("node{node}"))
            .join(format!("ledger-{election}.csv"))
    }

    pub fn lake_path(&self, election: &str, name: &str) -> PathBuf {
        self.root.join("lake").join(election).join(name)
    }

    fn read_node(&self, node: u32, election: &str) -> NodeChain {
        let path = self.node_ledger_path(node, election);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let mut rdr = csv::Reader::from_path(&path).map_err(|e| e.to_string())?;
        let mut out = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            if rec.len() != 4 {
                return Err(format!("expected 4 columns, found {}", rec.len()));
            }
            out.push(LedgerEntry {
                seq: rec[0].parse().map_err(|_| format!("bad seq {:?}", &rec[0]))?,
                election: election.to_string(),
                name: rec[1].to_string(),
                sha256: rec[2].to_string(),
                prev_hash: rec[3].to_string(),
            });
        }
        Ok(out)
    }

    fn node_chains(&self, election: &str) -> Vec<(u32, Option<NodeChain>)> {
        (1..=self.quorum.nodes)
            .map(|j| {
                let chain = self.up[j as usize - 1].then(|| self.read_node(j, election));
                (j, chain)
            })
            .collect()
    }

    /// Longest prefix on which at least `K` reachable nodes agree, with agreement counts.
    fn quorum_chain(&self, election: &str) -> Vec<(LedgerEntry, u32)> {
        let chains: Vec<Vec<LedgerEntry>> = self
            .node_chains(election)
            .into_iter()
            .filter_map(|(_, c)| c.and_then(Result::ok))
            .collect();
        let mut out: Vec<(LedgerEntry, u32)> = Vec::new();
        for seq in 0.. {
            let mut votes: BTreeMap<String, (LedgerEntry, u32)> = BTreeMap::new();
            for chain in &chains {
                if let Some(e) = chain.get(seq) {
                    votes.entry(e.canonical_encoding()).or_insert_with(|| (e.clone(), 0)).1 += 1;
                }
            }
            let Some((entry, count)) = votes.into_values().max_by_key(|(_, c)| *c) else {
                break;
            };
            let links = entry.seq == seq as u64
                && entry.prev_hash == out.last().map_or_else(|| GENESIS_HASH.to_string(), |(e, _)| e.hash());
            if count < self.quorum.threshold || !links {
                break;
            }
            out.push((entry, count));
        }
        out
    }

    /// Quorum-agreed entries for `election`.
    pub fn entries(&self, election: &str) -> Vec<LedgerEntry> {
        self.quorum_chain(election).into_iter().map(|(e, _)| e).collect()
    }

    pub fn head_hash(&self, election: &str) -> String {
        self.entries(election)
            .last()
            .map_or_else(|| GENESIS_HASH.to_string(), LedgerEntry::hash)
    }

    /// Stores `bytes` and commits a ledger entry for it.
    pub fn publish(&mut self, election: &str, name: &str, bytes: Vec<u8>) -> Result<LedgerEntry, WbbError> {
        let mut staging = self.stage(election)?;
        let entry = staging.post(name, bytes)?;
        let batch = staging.into_batch();
        self.commit(batch)?;
        Ok(entry)
    }

    /// Starts a batch of publications that commit together.
    pub fn stage(&self, election: &str) -> Result<Staging<'_>, WbbError> {
        check_name(election)?;
        let base = self.entries(election);
        Ok(Staging {
            wbb: self,
            election: election.to_string(),
            base,
            pending: Vec::new(),
        })
    }

    /// Commits a staged batch: every file or none.
    pub fn commit(&mut self, batch: Batch) -> Result<Vec<LedgerEntry>, WbbError> {
        let current = self.entries(&batch.election);
        if current.last().map(LedgerEntry::hash) != batch.base_head {
            return Err(WbbError::StaleBatch);
        }
        let names: BTreeSet<&str> = current.iter().map(|e| e.name.as_str()).collect();
        for (e, _) in &batch.pending {
            if names.contains(e.name.as_str()) {
                return Err(WbbError::AppendOnly { name: e.name.clone() });
            }
        }
        // A node acknowledges only if it is reachable and its chain matches the quorum chain.
        let ackers: Vec<u32> = self
            .node_chains(&batch.election)
            .into_iter()
            .filter_map(|(j, chain)| match chain {
                Some(Ok(c)) if c == current => Some(j),
                _ => None,
            })
            .collect();
        if (ackers.len() as u32) < self.quorum.threshold {
            return Err(WbbError::PublishFailed {
                acks: ackers.len() as u32,
                needed: self.quorum.threshold,
            });
        }
        if batch.pending.is_empty() {
            return Ok(Vec::new());
        }
        let dir = self.root.join("lake").join(&batch.election);
        fs::create_dir_all(&dir)?;
        for (e, bytes) in &batch.pending {
            fs::write(dir.join(&e.name), bytes)?;
        }
        let entries: Vec<LedgerEntry> = batch.pending.into_iter().map(|(e, _)| e).collect();
        for j in ackers {
            let mut chain = current.clone();
            chain.extend(entries.iter().cloned());
            fs::write(self.node_ledger_path(j, &batch.election), ledger_csv(&chain))?;
        }
        Ok(entries)
    }

    /// Returns the file only if its SHA-256 matches the quorum-agreed entry.
    pub fn get_verified(&self, election: &str, name: &str) -> Result<Vec<u8>, WbbError> {
        let entry = self.find_entry(election, name)?;
        let path = self.lake_path(election, name);
        let bytes = fs::read(&path).map_err(|_| WbbError::MissingFile { name: name.to_string() })?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(WbbError::IntegrityViolation { name: name.to_string() });
        }
        Ok(bytes)
    }

    fn find_entry(&self, election: &str, name: &str) -> Result<LedgerEntry, WbbError> {
        if let Some(e) = self.entries(election).into_iter().find(|e| e.name == name) {
            return Ok(e);
        }
        let seen_anywhere = self
            .node_chains(election)
            .into_iter()
            .filter_map(|(_, c)| c.and_then(Result::ok))
            .any(|c| c.iter().any(|e| e.name == name));
        if seen_anywhere {
            Err(WbbError::Unavailable { name: name.to_string() })
        } else {
            Err(WbbError::NotFound { name: name.to_string() })
        }
    }

    /// Re-validates every link and file hash, and compares each node with the quorum.
    pub fn audit_chain(&self, election: &str) -> LedgerAudit {
        let quorum = self.quorum_chain(election);
        let entries = quorum
            .iter()
            .map(|(e, count)| {
                let file = match fs::read(self.lake_path(election, &e.name)) {
                    Err(_) => FileStatus::Missing,
                    Ok(b) if sha256_hex(&b) == e.sha256 => FileStatus::Ok,
                    Ok(_) => FileStatus::HashMismatch,
                };
                EntryAudit {
                    seq: e.seq,
                    name: e.name.clone(),
                    sha256: e.sha256.clone(),
                    agreeing_nodes: *count,
                    file,
                }
            })
            .collect();
        let nodes = self
            .node_chains(election)
            .into_iter()
            .map(|(node, chain)| {
                let status = match chain {
                    None => NodeStatus::Down,
                    Some(Err(detail)) => NodeStatus::Unreadable { detail },
                    Some(Ok(chain)) => node_status(&chain, &quorum),
                };
                NodeAudit { node, status }
            })
            .collect();
        LedgerAudit {
            election: election.to_string(),
            head: quorum.last().map_or_else(|| GENESIS_HASH.to_string(), |(e, _)| e.hash()),
            entries,
            nodes,
        }
    }

    /// `ledger-<election>.csv` for the quorum chain.
    pub fn export_ledger(&self, election: &str) -> String {
        ledger_csv(&self.entries(election))
    }

    /// A [`BoardReader`] view over one election.
    pub fn reader<'a>(&'a self, election: &'a str) -> ElectionBoard<'a> {
        ElectionBoard { wbb: self, election }
    }
}

fn node_status(chain: &[LedgerEntry], quorum: &[(LedgerEntry, u32)]) -> NodeStatus {
    let mut prev = GENESIS_HASH.to_string();
    for (i, e) in chain.iter().enumerate() {
        if e.seq != i as u64 || e.prev_hash != prev {
            return NodeStatus::BrokenChain { seq: i as u64 };
        }
        prev = e.hash();
    }
    for (i, (q, _)) in quorum.iter().enumerate() {
        if chain.get(i) != Some(q) {
            return NodeStatus::Divergent { seq: i as u64 };
        }
    }
    if chain.len() > quorum.len() {
        return NodeStatus::Divergent { seq: quorum.len() as u64 };
    }
    NodeStatus::Consistent
}

fn ledger_csv(entries: &[LedgerEntry]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seq", "name", "sha256", "prev_hash"]).expect("in-memory write");
    for e in entries {
        w.write_record([e.seq.to_string(), e.name.clone(), e.sha256.clone(), e.prev_hash.clone()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory write")).expect("ascii")
}

/// Pending publications against a fixed ledger head.
pub struct Staging<'a> {
    wbb: &'a Wbb,
    election: String,
    base: Vec<LedgerEntry>,
    pending: Vec<(LedgerEntry, Vec<u8>)>,
}

/// A staged batch, detached from the board so it can be committed.
#[derive(Debug)]
pub struct Batch {
    election: String,
    base_head: Option<String>,
    pending: Vec<(LedgerEntry, Vec<u8>)>,
}

impl Batch {
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.pending.iter().map(|(e, _)| e.name.as_str())
    }
}

impl Staging<'_> {
    pub fn into_batch(self) -> Batch {
        Batch {
            election: self.election,
            base_head: self.base.last().map(LedgerEntry::hash),
            pending: self.pending,
        }
    }

    /// Hash of the last entry, staged or committed.
    pub fn head_hash(&self) -> String {
        self.pending
            .last()
            .map(|(e, _)| e.hash())
            .or_else(|| self.base.last().map(LedgerEntry::hash))
            .unwrap_or_else(|| GENESIS_HASH.to_string())
    }
}

impl BoardWriter for Staging<'_> {
    fn post(&mut self, name: &str, bytes: Vec<u8>) -> Result<LedgerEntry, WbbError> {
        check_name(name)?;
        if self.contains(name) {
            return Err(WbbError::AppendOnly { name: name.to_string() });
        }
        let prev = self.pending.last().map(|(e, _)| e).or(self.base.last());
        let entry = LedgerEntry::next(prev, &self.election, name, &bytes);
        self.pending.push((entry.clone(), bytes));
        Ok(entry)
    }
}

impl BoardReader for Staging<'_> {
    fn entry(&self, name: &str) -> Result<LedgerEntry, WbbError> {
        if let Some((e, _)) = self.pending.iter().find(|(e, _)| e.name == name) {
            return Ok(e.clone());
        }
        self.base
            .iter()
            .find(|e| e.name == name)
            .cloned()
            .ok_or_else(|| WbbError::NotFound { name: name.to_string() })
    }

    fn read(&self, name: &str) -> Result<Vec<u8>, WbbError> {
        if let Some((_, b)) = self.pending.iter().find(|(e, _)| e.name == name) {
            return Ok(b.clone());
        }
        self.wbb.get_verified(&self.election, name)
    }
}

/// Verified reads for one election.
#[derive(Clone, Copy)]
pub struct ElectionBoard<'a> {
    wbb: &'a Wbb,
    election: &'a str,
}

impl BoardReader for ElectionBoard<'_> {
    fn entry(&self, name: &str) -> Result<LedgerEntry, WbbError> {
        self.wbb.find_entry(self.election, name)
    }

    fn read(&self, name: &str) -> Result<Vec<u8>, WbbError> {
        self.wbb.get_verified(self.election, name)
    }
}
