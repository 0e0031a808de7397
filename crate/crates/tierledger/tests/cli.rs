use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn tierledger(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tierledger")).args(args).env_remove("TIERLEDGER_LOG_LEVEL").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(out)))
}

fn scenario(name: &str) -> String {
    fixtures().join("scenarios").join(format!("{name}.json")).to_string_lossy().into_owned()
}

/// Runs a fixture scenario into a fresh log directory.
fn logged(name: &str) -> (tempfile::TempDir, String) {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("log").to_string_lossy().into_owned();
    let out = tierledger(&["--quiet", "run", &scenario(name), &dir]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    (tmp, dir)
}

#[test]
fn run_then_replay_and_digest_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("log");
    let dir = dir.to_str().unwrap();
    let run = tierledger(&["--json", "run", &scenario("escrow"), dir]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let report = json(&run);
    assert_eq!(report["command"], "run");
    assert_eq!(report["ok"], true);
    assert_eq!(report["exit_code"], 0);
    assert!(report["assertions"].as_array().unwrap().iter().all(|a| a["pass"] == true));
    assert!(report["receipts"].as_array().unwrap().iter().any(|r| r["status_name"] == "ScriptVerifyFailed"));

    let replay = json(&tierledger(&["--json", "replay", dir]));
    assert_eq!(replay["ok"], true);
    assert_eq!(replay["divergence"], Value::Null);
    assert_eq!(replay["head"], report["head"]);
    assert_eq!(replay["digest"], report["digest"]);
    assert_eq!(replay["batches"], report["batches"]);

    let digest = tierledger(&["digest", dir]);
    assert_eq!(code(&digest), 0);
    assert_eq!(stdout(&digest).trim(), report["digest"].as_str().unwrap());
}

#[test]
fn human_output_and_quiet() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tierledger(&["run", &scenario("empty"), tmp.path().join("a").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.lines().last().unwrap().starts_with("digest "), "{text}");
    assert!(text.contains("0/0 assertions passed"));

    let out = tierledger(&["--quiet", "run", &scenario("empty"), tmp.path().join("b").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
}

#[test]
fn run_refuses_an_existing_log() {
    let (_tmp, dir) = logged("empty");
    let again = tierledger(&["run", &scenario("empty"), &dir]);
    assert_eq!(code(&again), 2);
    assert!(stderr(&again).contains("already holds a log"));
}

#[test]
fn tampered_header_is_a_divergence_at_its_batch() {
    let (_tmp, dir) = logged("timelock_replace");
    let path = Path::new(&dir).join("header_000002.json");
    let mut hf: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let digest = hf["header"]["state_digest"].as_str().unwrap().to_string();
    let flipped = if digest.starts_with('0') { format!("1{}", &digest[1..]) } else { format!("0{}", &digest[1..]) };
    hf["header"]["state_digest"] = Value::String(flipped);
    fs::write(&path, serde_json::to_string_pretty(&hf).unwrap()).unwrap();

    let out = tierledger(&["replay", &dir]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("batch 2"), "{}", stderr(&out));

    let report = json(&tierledger(&["--json", "replay", &dir]));
    assert_eq!(report["ok"], false);
    assert_eq!(report["exit_code"], 1);
    assert_eq!(report["divergence"]["batch"], 2);
    assert_eq!(report["divergence"]["field"], "state_digest");
    assert_eq!(code(&tierledger(&["digest", &dir])), 1);
}

#[test]
fn tampered_amount_is_caught() {
    let (_tmp, dir) = logged("multisig_2of2");
    let path = Path::new(&dir).join("batch_000001.json");
    let text = fs::read_to_string(&path).unwrap();
    let mut batch: Value = serde_json::from_str(&text).unwrap();
    let amount = batch.pointer_mut("/txs/0/kind/UtxoSpend/outputs/0/amount").expect("first tx is a spend");
    *amount = Value::from(amount.as_u64().unwrap() + 1);
    fs::write(&path, serde_json::to_string_pretty(&batch).unwrap()).unwrap();
    let report = json(&tierledger(&["--json", "replay", &dir]));
    assert_eq!(report["divergence"]["batch"], 1, "{report}");
}

#[test]
fn missing_or_unreadable_log_files_are_input_errors() {
    let (_tmp, dir) = logged("dex");
    fs::remove_file(Path::new(&dir).join("batch_000003.json")).unwrap();
    let out = tierledger(&["--json", "replay", &dir]);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["exit_code"], 2);
    assert!(json(&out)["error"].as_str().unwrap().contains("batch_000003.json"));

    fs::write(Path::new(&dir).join("batch_000003.json"), "{ not json").unwrap();
    assert_eq!(code(&tierledger(&["replay", &dir])), 2);

    assert_eq!(code(&tierledger(&["replay", "/nonexistent/log"])), 2);
}

#[test]
fn failed_assertion_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let mut s: Value = serde_json::from_str(&fs::read_to_string(scenario("client_rule")).unwrap()).unwrap();
    s["steps"][2]["equals"] = Value::from(16);
    let path = tmp.path().join("wrong.json");
    fs::write(&path, s.to_string()).unwrap();
    let out = tierledger(&["run", path.to_str().unwrap(), tmp.path().join("log").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("FAIL step 3"), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    // the log is still complete and replays cleanly
    assert_eq!(code(&tierledger(&["replay", tmp.path().join("log").to_str().unwrap()])), 0);
}

#[test]
fn malformed_scenarios_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{ "keys": { "operator": "operator" }, "genesis": { "operator": "operator" }, "steps": [{ "step": "submit" }] }"#)
        .unwrap();
    let out = tierledger(&["--json", "run", bad.to_str().unwrap(), tmp.path().join("a").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["ok"], false);
    let out = tierledger(&["run", "/nonexistent.json", tmp.path().join("b").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn classify_fixture_transactions() {
    for (file, level) in [
        ("l1_multisig_spend", "L1"),
        ("l1_5_timelocked", "L1.5"),
        ("l2_escrow_funding", "L2"),
        ("l3_deploy", "L3"),
        ("l3_call", "L3"),
    ] {
        let path = fixtures().join("txs").join(format!("{file}.json"));
        let out = tierledger(&["classify", path.to_str().unwrap()]);
        assert_eq!(code(&out), 0);
        assert_eq!(stdout(&out).trim(), level, "{file}");
        let report = json(&tierledger(&["--json", "classify", path.to_str().unwrap()]));
        assert_eq!(report["txid"].as_str().unwrap().len(), 64);
    }
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("tx.json");
    fs::write(&bad, r#"{ "kind": "nonsense" }"#).unwrap();
    assert_eq!(code(&tierledger(&["classify", bad.to_str().unwrap()])), 2);
}

#[test]
fn init_writes_a_replayable_genesis() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("log");
    let genesis = fixtures().join("genesis.json");
    let init = json(&tierledger(&["--json", "init", genesis.to_str().unwrap(), dir.to_str().unwrap()]));
    assert_eq!(init["ok"], true);
    let replay = json(&tierledger(&["--json", "replay", dir.to_str().unwrap()]));
    assert_eq!(replay["batches"], 0);
    assert_eq!(replay["digest"], init["digest"]);
    assert_eq!(code(&tierledger(&["init", genesis.to_str().unwrap(), dir.to_str().unwrap()])), 2);

    let bad = tmp.path().join("bad_genesis.json");
    fs::write(&bad, "[]").unwrap();
    assert_eq!(code(&tierledger(&["init", bad.to_str().unwrap(), tmp.path().join("x").to_str().unwrap()])), 2);
}

#[test]
fn log_level_is_validated_and_used() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |level: &str, name: &str| {
        Command::new(env!("CARGO_BIN_EXE_tierledger"))
            .args(["--quiet", "run", &scenario("client_rule"), tmp.path().join(name).to_str().unwrap()])
            .env("TIERLEDGER_LOG_LEVEL", level)
            .output()
            .unwrap()
    };
    let out = run("verbose", "a");
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("TIERLEDGER_LOG_LEVEL"));

    let quiet = run("error", "b");
    assert_eq!(code(&quiet), 0);
    assert!(quiet.stderr.is_empty());

    let debug = run("debug", "c");
    assert_eq!(code(&debug), 0);
    let log = stderr(&debug);
    assert!(log.contains("client rule 1 paid 5"), "{log}");
    assert!(log.contains("DEBUG"));
}
