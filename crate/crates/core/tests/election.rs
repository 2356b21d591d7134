//! Lifecycle runs over a temporary workspace.

use std::fs;

use selene_core::election::{
    files, sample_votes, CheckStatus, Election, ElectionConfig, ElectionError, ErrorClass, Faults, MixSubstitution,
    Phase,
};
use selene_core::tracker::forge_alpha;
use selene_core::tracker::TrackerTable;

fn config(voters: u32, seed: u64) -> ElectionConfig {
    ElectionConfig {
        voters,
        ..ElectionConfig::demo(seed)
    }
}

fn run_to_mixed(dir: &std::path::Path, cfg: ElectionConfig, faults: Faults) -> Result<Election, ElectionError> {
    let e = Election::init(dir, cfg.clone())?.with_faults(faults);
    e.setup()?;
    e.import_votes(&sample_votes(&cfg, "mayor", &["Alice", "Bob", "Carol"], cfg.seed))?;
    e.mix_and_decrypt()?;
    Ok(e)
}

#[test]
fn full_lifecycle_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(20, 7);
    let e = Election::init(dir.path(), cfg.clone()).unwrap();
    assert_eq!(e.phase().unwrap(), Phase::Created);
    let s = e.setup().unwrap();
    assert_eq!(s.voters, 20);
    assert_eq!(e.phase().unwrap(), Phase::CommitmentsIssued);

    let report = e.verify_election().unwrap();
    assert!(report.passed(), "{:?}", report.first_failure());
    assert_eq!(report.check("records").unwrap().status, CheckStatus::Skip);

    let votes = sample_votes(&cfg, "mayor", &["Alice", "Bob", "Carol"], 7);
    let imported = e.import_votes(&votes).unwrap();
    assert_eq!(imported.ballots, 20);
    let mixed = e.mix_and_decrypt().unwrap();
    assert_eq!(mixed.len(), 20);

    let alphas = e.notify().unwrap();
    assert_eq!(alphas.len(), 20);
    let tally = e.tally().unwrap();
    assert_eq!(tally.race("mayor").unwrap().total(), 20);

    let report = e.verify_election().unwrap();
    assert!(report.passed(), "{:?}", report.first_failure());
    assert!(report.checks.iter().all(|c| c.status == CheckStatus::Pass), "{:#?}", report.checks);

    // Nothing published links a pseudonym to a vote or leaks a voter key.
    let wbb = e.wbb().unwrap();
    for entry in wbb.entries("demo") {
        let text = String::from_utf8(wbb.get_verified("demo", &entry.name).unwrap()).unwrap();
        for i in 1..=20 {
            let pseudonym = cfg.pseudonym(i);
            let sk = e.voter_secret(&pseudonym).unwrap().to_hex();
            assert!(!text.contains(&sk), "{} leaks a secret key", entry.name);
            if text.contains(&pseudonym) {
                assert!(["Alice", "Bob", "Carol"].iter().all(|c| !text.contains(c)), "{}", entry.name);
            }
        }
    }

    // Each voter finds their own plaintext under their tracker.
    let plain = csv::Reader::from_reader(votes.as_slice())
        .records()
        .map(|r| r.unwrap())
        .map(|r| (r[0].to_string(), r[2].to_string()))
        .collect::<Vec<_>>();
    let mut trackers = std::collections::BTreeSet::new();
    for (pseudonym, vote) in &plain {
        let (alpha, beta) = e.exported_alpha(pseudonym).unwrap();
        let check = e.verify_vote(pseudonym, &alpha, &beta).unwrap();
        assert_eq!(check.votes, vec![("mayor".to_string(), vote.clone())]);
        assert!(trackers.insert(check.tracker));
    }
}

#[test]
fn fake_alpha_opens_to_another_tracker() {
    let dir = tempfile::tempdir().unwrap();
    let e = run_to_mixed(dir.path(), config(6, 3), Faults::default()).unwrap();
    e.notify().unwrap();
    let params = e.params().unwrap();
    let wbb = e.wbb().unwrap();
    let table = TrackerTable::from_csv(&params, &wbb.get_verified("demo", files::TRACKERS).unwrap()).unwrap();
    let (alpha, beta) = e.exported_alpha("V001").unwrap();
    let own = e.verify_vote("V001", &alpha, &beta).unwrap();
    let other = e.verify_vote("V002", &e.exported_alpha("V002").unwrap().0, &e.exported_alpha("V002").unwrap().1).unwrap();
    let sk = e.voter_secret("V001").unwrap();
    let fake = forge_alpha(&params, &sk, &beta, other.tracker, &table).unwrap();
    let coerced = e.verify_vote("V001", &fake, &beta).unwrap();
    assert_eq!(coerced.tracker, other.tracker);
    assert_ne!(coerced.tracker, own.tracker);
    assert_eq!(coerced.votes, other.votes);
}

#[test]
fn phases_are_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(4, 1);
    let e = Election::init(dir.path(), cfg.clone()).unwrap();
    let err = e.mix_and_decrypt().unwrap_err();
    assert_eq!(err.class(), ErrorClass::PhaseOrThreshold);
    e.setup().unwrap();
    assert!(matches!(e.setup().unwrap_err(), ElectionError::Phase { .. }));
    assert!(matches!(e.notify().unwrap_err(), ElectionError::Phase { .. }));
    assert!(matches!(e.tally().unwrap_err(), ElectionError::Phase { .. }));
    e.import_votes(&sample_votes(&cfg, "r", &["A", "B"], 1)).unwrap();
    assert!(matches!(
        e.import_votes(&sample_votes(&cfg, "r", &["A"], 1)).unwrap_err(),
        ElectionError::Phase { found: Phase::VotesImported, .. }
    ));
    assert!(!e.wbb().unwrap().entries("demo").iter().any(|x| x.name.starts_with("records-")));
    e.mix_and_decrypt().unwrap();
    e.tally().unwrap();
    assert!(matches!(e.notify().unwrap_err(), ElectionError::Phase { .. }));
}

#[test]
fn import_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let e = Election::init(dir.path(), config(3, 2)).unwrap();
    e.setup().unwrap();
    let cases: [(&str, u64); 4] = [
        ("voter,race,vote_text\nV001,r,A\n", 1),
        ("pseudonym,race,vote_text\nV001,r,A\nV999,r,B\n", 3),
        ("pseudonym,race,vote_text\nV001,r,\n", 2),
        ("pseudonym,race,vote_text\nV001,bad race,A\n", 2),
    ];
    for (text, line) in cases {
        match e.import_votes(text.as_bytes()).unwrap_err() {
            ElectionError::Import { line: l, .. } => assert_eq!(l, line, "{text}"),
            other => panic!("{other}"),
        }
    }
    assert_eq!(e.phase().unwrap(), Phase::CommitmentsIssued);
    // Later rows replace earlier ones.
    let s = e
        .import_votes(b"pseudonym,race,vote_text\nV001,r,A\nV001,r,B\nV002,q,A\n")
        .unwrap();
    assert_eq!(s.ballots, 2);
    e.mix_and_decrypt().unwrap();
    let t = e.tally().unwrap();
    assert_eq!(t.race("r").unwrap().counts, vec![("B".to_string(), 1)]);
    let (a, b) = (
        e.params().unwrap().generator(),
        e.params().unwrap().generator(),
    );
    assert!(matches!(e.verify_vote("V007", &a, &b).unwrap_err(), ElectionError::UnknownVoter(_)));
}

#[test]
fn zero_voters_run_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let e = Election::init(dir.path(), config(0, 5)).unwrap();
    e.setup().unwrap();
    e.import_votes(b"pseudonym,race,vote_text\n").unwrap();
    assert!(e.mix_and_decrypt().unwrap().is_empty());
    assert!(e.tally().unwrap().races.is_empty());
    let report = e.verify_election().unwrap();
    assert!(report.passed(), "{:?}", report.first_failure());
}

#[test]
fn abstainer_has_no_recorded_ballot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(3, 4);
    let e = Election::init(dir.path(), cfg).unwrap();
    e.setup().unwrap();
    e.import_votes(b"pseudonym,race,vote_text\nV001,r,A\nV002,r,B\n").unwrap();
    e.mix_and_decrypt().unwrap();
    e.notify().unwrap();
    let (a, b) = e.exported_alpha("V003").unwrap();
    assert!(matches!(e.verify_vote("V003", &a, &b).unwrap_err(), ElectionError::NoRecordedBallot(_)));
}

#[test]
fn corrupt_dkg_share_aborts_setup() {
    let dir = tempfile::tempdir().unwrap();
    let faults = Faults {
        corrupt_dkg_share: Some((2, 3)),
        ..Faults::default()
    };
    let e = Election::init(dir.path(), config(2, 1)).unwrap().with_faults(faults);
    let err = e.setup().unwrap_err();
    assert!(err.to_string().contains("teller 3 rejects the share dealt by teller 2"), "{err}");
    assert_eq!(e.phase().unwrap(), Phase::Created);
    assert!(e.wbb().unwrap().entries("demo").is_empty());
}

#[test]
fn decryption_tolerates_offline_tellers_up_to_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(4, 8);
    let e = Election::init(dir.path(), cfg.clone()).unwrap();
    e.setup().unwrap();
    e.import_votes(&sample_votes(&cfg, "r", &["A", "B"], 8)).unwrap();
    let one_down = e.clone().with_faults(Faults {
        offline_tellers: vec![2, 3],
        ..Faults::default()
    });
    let err = one_down.mix_and_decrypt().unwrap_err();
    assert_eq!(err.class(), ErrorClass::PhaseOrThreshold, "{err}");
    assert_eq!(e.phase().unwrap(), Phase::VotesImported);
    let e = e.with_faults(Faults {
        offline_tellers: vec![2],
        ..Faults::default()
    });
    e.mix_and_decrypt().unwrap();
    assert!(matches!(
        e.notify().unwrap_err(),
        ElectionError::Tracker(selene_core::tracker::TrackerError::MissingReveal { teller: 2 })
    ));
    assert!(e.verify_election().unwrap().passed());
}

#[test]
fn faults_are_named_by_the_verifier() {
    let dir = tempfile::tempdir().unwrap();
    let e = run_to_mixed(
        dir.path(),
        config(5, 2),
        Faults {
            forge_partial: Some(1),
            ..Faults::default()
        },
    )
    .unwrap();
    let r = e.verify_election().unwrap();
    assert_eq!(r.failed(), vec!["decryption"], "{:#?}", r.checks);

    let dir = tempfile::tempdir().unwrap();
    let e = run_to_mixed(
        dir.path(),
        config(5, 2),
        Faults {
            duplicate_tracker: true,
            ..Faults::default()
        },
    )
    .unwrap();
    let r = e.verify_election().unwrap();
    assert_eq!(r.failed(), vec!["trackers"], "{:#?}", r.checks);

    // Tampering with a lake file, then with one node's ledger.
    let dir = tempfile::tempdir().unwrap();
    let e = run_to_mixed(dir.path(), config(5, 2), Faults::default()).unwrap();
    let wbb = e.wbb().unwrap();
    let path = wbb.lake_path("demo", files::MIXED);
    let honest = fs::read(&path).unwrap();
    let mut bytes = honest.clone();
    let last = bytes.len() - 2;
    bytes[last] ^= 1;
    fs::write(&path, &bytes).unwrap();
    let r = e.verify_election().unwrap();
    assert_eq!(r.first_failure().unwrap().name, "file-hashes");
    assert_eq!(r.first_failure().unwrap().locus.as_deref(), Some(files::MIXED));
    fs::write(&path, honest).unwrap();

    let node = wbb.node_ledger_path(2, "demo");
    let text = fs::read_to_string(&node).unwrap().replacen("params.csv", "paramz.csv", 1);
    fs::write(&node, text).unwrap();
    let r = e.verify_election().unwrap();
    assert_eq!(r.failed(), vec!["ledger-chain"], "{:#?}", r.checks);
    assert_eq!(r.first_failure().unwrap().locus.as_deref(), Some("node2"));
}

#[test]
fn mix_substitution_is_caught_by_self_audit_or_verifier() {
    let mut detected = 0;
    let trials = 6;
    for seed in 0..trials {
        let dir = tempfile::tempdir().unwrap();
        let faults = Faults {
            mix_substitution: Some(MixSubstitution { node: 2, row: 0 }),
            ..Faults::default()
        };
        match run_to_mixed(dir.path(), config(4, seed), faults.clone()) {
            Err(ElectionError::MixAudit { failure, .. }) => {
                assert_eq!(failure.node, 2);
                detected += 1;
                continue;
            }
            Err(other) => panic!("{other}"),
            // The challenge missed the substituted row.
            Ok(_) => {}
        }
    }
    assert!(detected >= 1, "{detected} of {trials}");

    let dir = tempfile::tempdir().unwrap();
    let faults = Faults {
        mix_substitution: Some(MixSubstitution { node: 2, row: 0 }),
        skip_self_audit: true,
        ..Faults::default()
    };
    let mut caught = false;
    for seed in 0..8 {
        let dir = dir.path().join(seed.to_string());
        let e = run_to_mixed(&dir, config(4, seed), faults.clone()).unwrap();
        let r = e.verify_election().unwrap();
        if !r.passed() {
            assert_eq!(r.failed(), vec!["vote-mix"], "{:#?}", r.checks);
            caught = true;
            break;
        }
    }
    assert!(caught);
}

#[test]
fn config_validation() {
    let ok = ElectionConfig::demo(1);
    assert!(ok.validate().is_ok());
    for bad in [
        ElectionConfig { tellers: 1, threshold: 1, ..ok.clone() },
        ElectionConfig { threshold: 5, ..ok.clone() },
        ElectionConfig { threshold: 0, ..ok.clone() },
        ElectionConfig { ledger_quorum: 2, ..ok.clone() },
        ElectionConfig { bits: 128, ..ok.clone() },
        ElectionConfig { election: "a b".into(), ..ok.clone() },
    ] {
        assert!(matches!(bad.validate(), Err(ElectionError::Config(_))), "{bad:?}");
    }
    let text = ok.to_toml();
    assert_eq!(ElectionConfig::from_toml(&text).unwrap(), ok);
    assert!(ElectionConfig::from_toml(&format!("extra = 1\n{text}")).is_err());
    assert_eq!(ok.pseudonym(7), "V007");
    assert_eq!(ElectionConfig { voters: 12345, ..ok }.pseudonym(7), "V00007");
}
