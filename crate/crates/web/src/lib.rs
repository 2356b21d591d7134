//! Three small explorers compiled to WebAssembly for `www/index.html`.
//!
//! Each export takes plain numbers and returns a JSON string, so the page
//! needs no bindings beyond `wasm-bindgen`'s generated loader. The same
//! functions run natively for tests.

use std::sync::OnceLock;

use selene_core::elgamal::{encrypt, encrypt_random, KeyPair};
use selene_core::group::GroupParams;
use selene_core::mixnet::{run_mix, verify_mix, MixBatch, MixNode, Substitution};
use selene_core::rng::{derive_rng, master_seed};
use selene_core::teller::{combine_partials, dkg_round, new_tellers, TellerError};
use selene_core::tracker::{forge_alpha, open_commitment, TrackerTable};
use selene_core::wbb::MemoryBoard;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Trackers in the toy table. `g^n` is distinct for `n = 1..=10` since `q = 11`.
pub const TOY_TRACKERS: [u32; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

#[derive(Debug, Serialize)]
pub struct CommitmentView {
    pub p: u32,
    pub q: u32,
    pub g: u32,
    pub sk: u32,
    pub pk: u32,
    /// `(n, g^n)`
    pub table: Vec<(u32, u32)>,
    pub tracker: u32,
    pub r: u32,
    pub alpha: u32,
    pub beta: u32,
    pub opened: Option<u32>,
    pub target: u32,
    pub fake_alpha: u32,
    pub fake_opened: Option<u32>,
}

#[derive(Debug, Serialize)]
pub struct ThresholdView {
    pub tellers: Vec<u32>,
    pub threshold: u32,
    pub pk: u32,
    pub message: u32,
    pub ciphertext: (u32, u32),
    /// `(teller, partial share)`
    pub partials: Vec<(u32, u32)>,
    pub decrypted: Option<u32>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct DetectionView {
    pub trials: u32,
    pub rows: u32,
    pub nodes: u32,
    pub detected: u32,
    pub rate: f64,
    /// One substituted row is opened on the side that exposes it with probability 1/2.
    pub expected: f64,
}

fn small(v: &selene_core::group::GroupElement) -> u32 {
    v.value().try_into().expect("toy group element")
}

/// Commits tracker `tracker` to a voter with secret `sk` in the toy group
/// (`p = 23, q = 11, g = 4`), opens it, then forges an alpha that opens the
/// same beta to `target`.
pub fn commitment(sk: u32, tracker: u32, target: u32, r: u32) -> Result<CommitmentView, String> {
    let params = GroupParams::toy();
    if !(1..11).contains(&sk) {
        return Err("sk must be in 1..=10".into());
    }
    for n in [tracker, target] {
        if !TOY_TRACKERS.contains(&n) {
            return Err(format!("tracker {n} is not in the table (1..=10)"));
        }
    }
    let voter = KeyPair::from_secret(&params, params.exponent(sk));
    let table = TrackerTable::build(&params, &params.generator(), &TOY_TRACKERS).map_err(|e| e.to_string())?;
    let element = table.element_of(tracker).expect("checked above");
    // (alpha, beta) = (g^r, pk^r * g^n): an ElGamal encryption under the voter's key.
    let ct = encrypt(&params, &voter.pk, element, &params.exponent(r));
    let opened = open_commitment(&params, &voter.sk, &ct.c1, &ct.c2, &table).ok();
    let fake = forge_alpha(&params, &voter.sk, &ct.c2, target, &table).map_err(|e| e.to_string())?;
    let fake_opened = open_commitment(&params, &voter.sk, &fake, &ct.c2, &table).ok();
    Ok(CommitmentView {
        p: 23,
        q: 11,
        g: 4,
        sk,
        pk: small(&voter.pk),
        table: table.rows().iter().map(|row| (row.n, small(&row.element))).collect(),
        tracker,
        r: r % 11,
        alpha: small(&ct.c1),
        beta: small(&ct.c2),
        opened,
        target,
        fake_alpha: small(&fake),
        fake_opened,
    })
}

/// Runs a 3-of-4 key generation in the toy group and decrypts `g^message`
/// with the tellers whose bits are set in `mask` (bit 0 is teller 1).
pub fn threshold(mask: u32, message: u32, seed: u64) -> Result<ThresholdView, String> {
    let params = GroupParams::toy();
    let mut tellers = new_tellers(&params, 4, 3, &master_seed(seed)).map_err(|e| e.to_string())?;
    let key = dkg_round(&mut tellers).map_err(|e| e.to_string())?;
    let m = params.encode(&params.exponent(message));
    let (ct, _) = encrypt_random(&params, &key.pk, &m, &mut derive_rng(&master_seed(seed), "message"));
    let chosen: Vec<_> = tellers.iter().filter(|t| mask & (1 << (t.index() - 1)) != 0).collect();
    let partials = chosen
        .iter()
        .map(|t| t.partial_decrypt(&ct, "explorer"))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let (decrypted, error) = match combine_partials(&params, &key, &ct, &partials, "explorer") {
        Ok(m) => (Some(small(&m)), None),
        Err(e @ TellerError::ThresholdNotMet { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.to_string()),
    };
    Ok(ThresholdView {
        tellers: chosen.iter().map(|t| t.index()).collect(),
        threshold: key.threshold,
        pk: small(&key.pk),
        message: small(&m),
        ciphertext: (small(&ct.c1), small(&ct.c2)),
        partials: partials.iter().map(|p| (p.teller, small(&p.share))).collect(),
        decrypted,
        error,
    })
}

fn detection_group() -> &'static GroupParams {
    static PARAMS: OnceLock<GroupParams> = OnceLock::new();
    PARAMS.get_or_init(|| GroupParams::generate_seeded(256, 2024).expect("256-bit group"))
}

/// Monte Carlo over `trials` mixes of `rows` rows through `nodes` nodes, with
/// the first node swapping one output ciphertext each time.
pub fn detection(trials: u32, rows: u32, nodes: u32, seed: u64) -> Result<DetectionView, String> {
    if rows == 0 || nodes < 2 || trials == 0 {
        return Err("need at least 1 trial, 1 row and 2 nodes".into());
    }
    let params = detection_group();
    let s = master_seed(seed);
    let mut rng = derive_rng(&s, "setup");
    let key = KeyPair::generate(params, &mut rng);
    let ct = |m: u32, rng: &mut _| encrypt_random(params, &key.pk, &params.encode(&params.exponent(m)), rng).0;
    let input = MixBatch::new(1, (0..rows).map(|m| vec![ct(m + 1, &mut rng)]).collect()).map_err(|e| e.to_string())?;
    let replacement = ct(rows + 1, &mut rng);
    let mut detected = 0;
    for trial in 0..trials {
        let mut mix: Vec<MixNode> = (1..=nodes)
            .map(|j| MixNode::new(j, derive_rng(&s, &format!("trial{trial}|node{j}"))))
            .collect();
        mix[0] = mix[0].clone().with_substitution(Substitution {
            row: (trial % rows) as usize,
            column: 0,
            replacement: replacement.clone(),
        });
        let mut board = MemoryBoard::new("explorer");
        run_mix(params, &key.pk, "t", &input, &mut mix, &mut board).map_err(|e| e.to_string())?;
        if verify_mix(params, &key.pk, "t", &input, nodes, &board).is_err() {
            detected += 1;
        }
    }
    Ok(DetectionView {
        trials,
        rows,
        nodes,
        detected,
        rate: f64::from(detected) / f64::from(trials),
        expected: 0.5,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).expect("json"),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

#[wasm_bindgen(js_name = commitmentExplorer)]
pub fn commitment_explorer(sk: u32, tracker: u32, target: u32, r: u32) -> String {
    to_json(commitment(sk, tracker, target, r))
}

#[wasm_bindgen(js_name = thresholdExplorer)]
pub fn threshold_explorer(mask: u32, message: u32, seed: u32) -> String {
    to_json(threshold(mask, message, u64::from(seed)))
}

#[wasm_bindgen(js_name = rpcDetection)]
pub fn rpc_detection(trials: u32, rows: u32, nodes: u32, seed: u32) -> String {
    to_json(detection(trials, rows, nodes, u64::from(seed)))
}
