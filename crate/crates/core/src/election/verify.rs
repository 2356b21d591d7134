//! Universal verification from published data alone.
//!
//! Every check reads the board through quorum-verified reads; nothing here
//! touches the operator's private state. A check whose inputs failed an
//! earlier check is reported as skipped rather than failed, so the first
//! failure in the report names the misbehavior.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::files::{self, Component, MixedRow, PublicParams, PublicVoter};
use super::tally::{self, TallyResult};
use super::{ballot_context, commitment_context, decrypt_context};
use crate::ballot::{records_from_csv, VoteMap, VoteRecord};
use crate::elgamal::Ciphertext;
use crate::group::GroupParams;
use crate::mixnet::{verify_mix, MixBatch};
use crate::teller::{combine_partials, ThresholdKey};
use crate::tracker::{beta_ciphertext, check_shares, TrackerTable};
use crate::wbb::{BoardReader, NodeStatus, Wbb, FileStatus};

/// Check names, in the order they run.
pub const CHECK_NAMES: [&str; 11] = [
    "ledger-chain",
    "file-hashes",
    "params",
    "trackers",
    "tracker-mix",
    "commitment-shares",
    "betas",
    "records",
    "vote-mix",
    "decryption",
    "tally",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub status: CheckStatus,
    pub detail: String,
    /// The file, row or node the failure points at.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub locus: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerificationReport {
    pub election: String,
    pub head: String,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    /// No check failed. Skipped checks (phases not reached yet) do not count against it.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.status == CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| c.status == CheckStatus::Fail)
            .map(|c| c.name)
            .collect()
    }
}

struct Failure {
    detail: String,
    locus: Option<String>,
}

fn fail<T>(detail: impl Into<String>, locus: impl Into<String>) -> Result<T, Failure> {
    Err(Failure {
        detail: detail.into(),
        locus: Some(locus.into()),
    })
}

/// How a check that did not fail ended.
enum Outcome {
    Pass(String),
    NotReached(String),
}

impl<E: std::fmt::Display> From<(E, &str)> for Failure {
    fn from((e, locus): (E, &str)) -> Self {
        Failure {
            detail: e.to_string(),
            locus: Some(locus.to_string()),
        }
    }
}

fn read(board: &impl BoardReader, name: &str) -> Result<Vec<u8>, Failure> {
    board.read(name).map_err(|e| (e, name).into())
}

struct Report {
    checks: Vec<CheckResult>,
}

impl Report {
    fn record<T>(&mut self, name: &'static str, result: Result<(T, Outcome), Failure>) -> Option<T> {
        let (status, detail, locus, value) = match result {
            Ok((v, Outcome::Pass(d))) => (CheckStatus::Pass, d, None, Some(v)),
            Ok((_, Outcome::NotReached(d))) => (CheckStatus::Skip, d, None, None),
            Err(f) => (CheckStatus::Fail, f.detail, f.locus, None),
        };
        self.checks.push(CheckResult {
            name,
            status,
            detail,
            locus,
        });
        value
    }

    fn skip(&mut self, name: &'static str, because: &str) {
        self.checks.push(CheckResult {
            name,
            status: CheckStatus::Skip,
            detail: format!("depends on {because}"),
            locus: None,
        });
    }
}

/// `$dep` must hold a value, else `$name` is skipped naming the first missing dependency.
macro_rules! need {
    ($report:ident, $name:literal, $($dep:ident = $label:literal),+) => {
        $(
            let Some($dep) = $dep.as_ref() else {
                $report.skip($name, $label);
                return None;
            };
        )+
    };
}

struct Public {
    election: String,
    params: GroupParams,
    key: ThresholdKey,
    mix_nodes: u32,
}

struct Race {
    name: String,
    records: Vec<VoteRecord>,
    map: VoteMap,
}

/// Runs every check against `election` on `wbb`.
pub fn verify_election(wbb: &Wbb, election: &str) -> VerificationReport {
    let audit = wbb.audit_chain(election);
    let board = wbb.reader(election);
    let mut report = Report { checks: Vec::new() };

    let chain: Result<_, Failure> = (|| {
        if audit.entries.is_empty() {
            return fail("no entries are published", election);
        }
        for n in &audit.nodes {
            if !matches!(n.status, NodeStatus::Consistent | NodeStatus::Down) {
                let finding = audit.findings().into_iter().find(|f| f.starts_with(&format!("node{}:", n.node)));
                return fail(finding.unwrap_or_default(), format!("node{}", n.node));
            }
        }
        let down = audit.nodes.iter().filter(|n| n.status == NodeStatus::Down).count();
        Ok(((), Outcome::Pass(format!("{} entries, {} of {} nodes reachable", audit.entries.len(), audit.nodes.len() - down, audit.nodes.len()))))
    })();
    report.record("ledger-chain", chain);

    let hashes: Result<_, Failure> = (|| {
        for e in &audit.entries {
            match e.file {
                FileStatus::Ok => {}
                FileStatus::HashMismatch => return fail("data lake bytes do not match the ledger hash", &e.name),
                FileStatus::Missing => return fail("recorded on the ledger but missing from the data lake", &e.name),
            }
        }
        Ok(((), Outcome::Pass(format!("{} files match their ledger hashes", audit.entries.len()))))
    })();
    let files_ok = report.record("file-hashes", hashes);

    let published: BTreeSet<String> = audit.entries.iter().map(|e| e.name.clone()).collect();
    let public = check_params(&mut report, &board, files_ok);
    let table = check_trackers(&mut report, &board, &public);
    let assigned = check_tracker_mix(&mut report, &board, &public, &table);
    let voters = check_shares_published(&mut report, &board, &public);
    let betas = check_betas(&mut report, &board, &public, &assigned, &voters);
    let races = check_records(&mut report, &board, &published, &public, &assigned, &voters, &betas);
    let outputs = check_vote_mix(&mut report, &board, &public, &races);
    let mixed = check_decryption(&mut report, &board, &public, &table, &races, &outputs);
    check_tally(&mut report, &board, &published, &mixed);

    VerificationReport {
        election: election.to_string(),
        head: audit.head,
        checks: report.checks,
    }
}

fn check_params(report: &mut Report, board: &impl BoardReader, files_ok: Option<()>) -> Option<Public> {
    need!(report, "params", files_ok = "file-hashes");
    let _ = files_ok;
    let result = (|| {
        let p = PublicParams::from_csv(&read(board, files::PARAMS)?).map_err(|e| (e, files::PARAMS))?;
        let dealers = files::dkg_from_csv(&p.params, &read(board, files::DKG)?).map_err(|e| (e, files::DKG))?;
        if dealers.len() as u32 != p.tellers {
            return fail(format!("{} dealers for {} tellers", dealers.len(), p.tellers), files::DKG);
        }
        if p.mix_nodes < 2 {
            return fail(format!("{} mix nodes", p.mix_nodes), files::PARAMS);
        }
        let key = ThresholdKey::from_broadcasts(&p.params, p.threshold, &dealers).map_err(|e| (e, files::DKG))?;
        if key.pk != p.pk_t {
            return fail("pk_T differs from the product of the dealers' constant terms", files::PARAMS);
        }
        let detail = format!("{}-bit group, {}-of-{} tellers, pk_T recomputed", p.params.bits(), p.threshold, p.tellers);
        Ok((
            Public {
                election: p.election,
                params: p.params,
                key,
                mix_nodes: p.mix_nodes,
            },
            Outcome::Pass(detail),
        ))
    })();
    report.record("params", result)
}

fn check_trackers(report: &mut Report, board: &impl BoardReader, public: &Option<Public>) -> Option<TrackerTable> {
    need!(report, "trackers", public = "params");
    let result = (|| {
        let table = TrackerTable::from_csv(&public.params, &read(board, files::TRACKERS)?)
            .map_err(|e| (e, files::TRACKERS))?;
        table
            .verify_recomputation(&public.params, &public.key.pk)
            .map_err(|e| (e, files::TRACKERS))?;
        let n = table.len();
        Ok((table, Outcome::Pass(format!("{n} distinct trackers, every row recomputed"))))
    })();
    report.record("trackers", result)
}

fn check_tracker_mix(
    report: &mut Report,
    board: &impl BoardReader,
    public: &Option<Public>,
    table: &Option<TrackerTable>,
) -> Option<Vec<Ciphertext>> {
    need!(report, "tracker-mix", public = "params", table = "trackers");
    let result = (|| {
        let input = MixBatch::new(1, table.rows().iter().map(|r| vec![r.ciphertext.clone()]).collect())
            .map_err(|e| (e, files::TRACKERS))?;
        let output = verify_mix(&public.params, &public.key.pk, files::TRACKER_PHASE, &input, public.mix_nodes, board)
            .map_err(|f| (f, files::TRACKER_PHASE))?;
        let assigned: Vec<Ciphertext> = output.into_rows().into_iter().map(|mut r| r.remove(0)).collect();
        let detail = format!("{} nodes, {} rows", public.mix_nodes, assigned.len());
        Ok((assigned, Outcome::Pass(detail)))
    })();
    report.record("tracker-mix", result)
}

struct Voters {
    list: Vec<PublicVoter>,
    shares: BTreeMap<u32, Vec<crate::teller::CommitmentShare>>,
}

fn check_shares_published(report: &mut Report, board: &impl BoardReader, public: &Option<Public>) -> Option<Voters> {
    need!(report, "commitment-shares", public = "params");
    let result = (|| {
        let params = &public.params;
        let list = files::voters_from_csv(params, &read(board, files::VOTERS)?).map_err(|e| (e, files::VOTERS))?;
        let index: BTreeMap<&str, u32> = list
            .iter()
            .enumerate()
            .map(|(i, v)| (v.pseudonym.as_str(), i as u32 + 1))
            .collect();
        if index.len() != list.len() {
            return fail("duplicate pseudonym", files::VOTERS);
        }
        let rows = files::shares_from_csv(params, &read(board, files::COMMITMENT_SHARES)?, |p| index.get(p).copied())
            .map_err(|e| (e, files::COMMITMENT_SHARES))?;
        let mut shares: BTreeMap<u32, Vec<_>> = BTreeMap::new();
        for (_, s) in rows {
            shares.entry(s.voter).or_default().push(s);
        }
        for (i, v) in list.iter().enumerate() {
            let locus = format!("{}: {}", files::COMMITMENT_SHARES, v.pseudonym);
            let voter_shares = shares.get(&(i as u32 + 1)).map(Vec::as_slice).unwrap_or_default();
            check_shares(
                params,
                &public.key.pk,
                &v.pk,
                public.key.total(),
                voter_shares,
                &commitment_context(&public.election, &v.pseudonym),
            )
            .map_err(|e| (e, locus.as_str()))?;
        }
        let detail = format!("{} voters x {} tellers, all proofs verify", list.len(), public.key.total());
        Ok((Voters { list, shares }, Outcome::Pass(detail)))
    })();
    report.record("commitment-shares", result)
}

fn check_betas(
    report: &mut Report,
    board: &impl BoardReader,
    public: &Option<Public>,
    assigned: &Option<Vec<Ciphertext>>,
    voters: &Option<Voters>,
) -> Option<()> {
    need!(report, "betas", public = "params", assigned = "tracker-mix", voters = "commitment-shares");
    let result = (|| {
        let params = &public.params;
        let betas = files::betas_from_csv(params, &read(board, files::BETAS)?).map_err(|e| (e, files::BETAS))?;
        let proofs = files::beta_proofs_from_csv(params, &read(board, files::BETA_PROOFS)?)
            .map_err(|e| (e, files::BETA_PROOFS))?;
        if betas.len() != voters.list.len() || assigned.len() != voters.list.len() {
            return fail(
                format!("{} betas and {} tracker rows for {} voters", betas.len(), assigned.len(), voters.list.len()),
                files::BETAS,
            );
        }
        let mut partials: BTreeMap<&str, Vec<_>> = BTreeMap::new();
        for (p, d) in &proofs {
            partials.entry(p.as_str()).or_default().push(d.clone());
        }
        for (i, v) in voters.list.iter().enumerate() {
            let locus = format!("{}: {}", files::BETAS, v.pseudonym);
            let (pseudonym, beta) = &betas[i];
            if pseudonym != &v.pseudonym || beta != &v.beta {
                return fail("betas.csv disagrees with voters.csv", locus);
            }
            let shares = voters.shares.get(&(i as u32 + 1)).map(Vec::as_slice).unwrap_or_default();
            let ct = beta_ciphertext(params, shares, &assigned[i]);
            let ps = partials.get(v.pseudonym.as_str()).map(Vec::as_slice).unwrap_or_default();
            let opened = combine_partials(params, &public.key, &ct, ps, &commitment_context(&public.election, &v.pseudonym))
                .map_err(|e| (e, locus.as_str()))?;
            if &opened != beta {
                return fail("partial decryptions do not combine to beta", locus);
            }
        }
        Ok(((), Outcome::Pass(format!("{} betas decrypt from their shares and tracker rows", betas.len()))))
    })();
    report.record("betas", result)
}

fn check_records(
    report: &mut Report,
    board: &impl BoardReader,
    published: &BTreeSet<String>,
    public: &Option<Public>,
    assigned: &Option<Vec<Ciphertext>>,
    voters: &Option<Voters>,
    betas: &Option<()>,
) -> Option<Vec<Race>> {
    need!(report, "records", public = "params", assigned = "tracker-mix", voters = "commitment-shares", betas = "betas");
    let _ = betas;
    let result = (|| {
        let params = &public.params;
        let race_names: Vec<&str> = published.iter().filter_map(|n| files::race_of_records(n)).collect();
        let has_mixed = published.contains(files::MIXED);
        if race_names.is_empty() && !has_mixed {
            return Ok((Vec::new(), Outcome::NotReached("no ballots published yet".into())));
        }
        if !has_mixed {
            return fail("ballots are published without the mix that consumes them", files::MIXED);
        }
        let by_pk: BTreeMap<_, usize> = voters.list.iter().enumerate().map(|(i, v)| (v.pk.clone(), i)).collect();
        let mut races = Vec::new();
        let mut total = 0;
        for race in race_names {
            let map_name = files::vote_map(race);
            let map = VoteMap::from_csv(params, &read(board, &map_name)?).map_err(|e| (e, map_name.as_str()))?;
            let name = files::records(race);
            let records = records_from_csv(params, &read(board, &name)?).map_err(|e| (e, name.as_str()))?;
            let context = ballot_context(&public.election, race);
            let mut seen = BTreeSet::new();
            for (row, r) in records.iter().enumerate() {
                let locus = format!("{name} row {row}");
                let Some(&i) = by_pk.get(&r.pk) else {
                    return fail("pk is not a registered voter", locus);
                };
                if !seen.insert(i) {
                    return fail(format!("second ballot from {}", voters.list[i].pseudonym), locus);
                }
                let v = &voters.list[i];
                r.verify(params, &public.key.pk, &v.dsa_pk, &context)
                    .map_err(|fault| (fault.name(), locus.as_str()))?;
                if r.tracker_ct != assigned[i] {
                    return fail(format!("tracker ciphertext is not {}'s tracker-mix row", v.pseudonym), locus);
                }
                if r.beta != v.beta {
                    return fail(format!("beta is not {}'s published beta", v.pseudonym), locus);
                }
            }
            total += records.len();
            races.push(Race {
                name: race.to_string(),
                records,
                map,
            });
        }
        let detail = format!("{total} ballots in {} race(s): proofs, signatures and bindings verify", races.len());
        Ok((races, Outcome::Pass(detail)))
    })();
    report.record("records", result)
}

fn check_vote_mix(
    report: &mut Report,
    board: &impl BoardReader,
    public: &Option<Public>,
    races: &Option<Vec<Race>>,
) -> Option<Vec<MixBatch>> {
    need!(report, "vote-mix", public = "params", races = "records");
    let result = (|| {
        if races.is_empty() {
            return Ok((Vec::new(), Outcome::NotReached("no ballots published yet".into())));
        }
        let mut outputs = Vec::new();
        for race in races {
            let input = MixBatch::new(
                2,
                race.records
                    .iter()
                    .map(|r| vec![r.tracker_ct.clone(), r.vote_ct.clone()])
                    .collect(),
            )
            .map_err(|e| (e, race.name.as_str()))?;
            let phase = files::vote_phase(&race.name);
            let output = verify_mix(&public.params, &public.key.pk, &phase, &input, public.mix_nodes, board)
                .map_err(|f| (f, phase.as_str()))?;
            outputs.push(output);
        }
        let detail = format!("{} race mix(es) of {} nodes audited", outputs.len(), public.mix_nodes);
        Ok((outputs, Outcome::Pass(detail)))
    })();
    report.record("vote-mix", result)
}

fn check_decryption(
    report: &mut Report,
    board: &impl BoardReader,
    public: &Option<Public>,
    table: &Option<TrackerTable>,
    races: &Option<Vec<Race>>,
    outputs: &Option<Vec<MixBatch>>,
) -> Option<Vec<MixedRow>> {
    need!(report, "decryption", public = "params", table = "trackers", races = "records", outputs = "vote-mix");
    let result = (|| {
        if races.is_empty() {
            return Ok((Vec::new(), Outcome::NotReached("nothing mixed yet".into())));
        }
        let params = &public.params;
        let mixed = files::mixed_from_csv(&read(board, files::MIXED)?).map_err(|e| (e, files::MIXED))?;
        let proofs = files::mixed_proofs_from_csv(params, &read(board, files::MIXED_PROOFS)?)
            .map_err(|e| (e, files::MIXED_PROOFS))?;
        let mut partials: BTreeMap<(&str, usize, Component), Vec<_>> = BTreeMap::new();
        for p in &proofs {
            partials
                .entry((p.race.as_str(), p.row, p.component))
                .or_default()
                .push(p.partial.clone());
        }
        let expected_rows: usize = outputs.iter().map(MixBatch::len).sum();
        if mixed.len() != expected_rows {
            return fail(format!("{} rows for {expected_rows} mixed ciphertexts", mixed.len()), files::MIXED);
        }
        let mut published = mixed.iter();
        for (race, output) in races.iter().zip(outputs) {
            let mut trackers = BTreeSet::new();
            for (row, cts) in output.rows().iter().enumerate() {
                let locus = format!("{} {} row {row}", files::MIXED_PROOFS, race.name);
                let mut elements = Vec::new();
                for c in [Component::Tracker, Component::Vote] {
                    let ps = partials
                        .get(&(race.name.as_str(), row, c))
                        .map(Vec::as_slice)
                        .unwrap_or_default();
                    let context = decrypt_context(&public.election, &race.name, row, c);
                    let m = combine_partials(params, &public.key, &cts[c.column()], ps, &context)
                        .map_err(|e| (format!("{} component: {e}", c.name()), locus.as_str()))?;
                    elements.push(m);
                }
                let row_locus = format!("{} {} row {row}", files::MIXED, race.name);
                let Some(tracker) = table.lookup(&elements[0]) else {
                    return fail("decrypted tracker is not in trackers.csv", row_locus);
                };
                let Ok(text) = race.map.decode(&elements[1]) else {
                    return fail("decrypted vote is not in the vote map", row_locus);
                };
                let expected = MixedRow {
                    tracker,
                    race: race.name.clone(),
                    vote_text: text.to_string(),
                };
                if published.next() != Some(&expected) {
                    return fail("mixed.csv disagrees with the verified decryption", row_locus);
                }
                if !trackers.insert(tracker) {
                    return fail(format!("tracker {tracker} appears twice"), row_locus);
                }
            }
        }
        let detail = format!("{} rows: every partial proof verifies and recombines to mixed.csv", mixed.len());
        Ok((mixed, Outcome::Pass(detail)))
    })();
    report.record("decryption", result)
}

fn check_tally(
    report: &mut Report,
    board: &impl BoardReader,
    published: &BTreeSet<String>,
    mixed: &Option<Vec<MixedRow>>,
) -> Option<()> {
    need!(report, "tally", mixed = "decryption");
    let result = (|| {
        if !published.contains(files::TALLY) {
            return Ok(((), Outcome::NotReached("no tally published yet".into())));
        }
        let claimed = TallyResult::from_csv(&read(board, files::TALLY)?).map_err(|e| (e, files::TALLY))?;
        let seats: BTreeMap<String, u32> = claimed.races.iter().map(|r| (r.race.clone(), r.seats)).collect();
        let recount = tally::count(mixed, |race| seats.get(race).copied().unwrap_or(1));
        if recount != claimed {
            let race = recount
                .races
                .iter()
                .find(|r| claimed.race(&r.race) != Some(r))
                .or(claimed.races.iter().find(|r| recount.race(&r.race).is_none()))
                .map_or_else(String::new, |r| r.race.clone());
            return fail("published counts or winners differ from a recount of mixed.csv", format!("{} {race}", files::TALLY));
        }
        Ok(((), Outcome::Pass(format!("{} race(s) recounted", recount.races.len()))))
    })();
    report.record("tally", result)
}
