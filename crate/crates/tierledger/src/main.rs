use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use tierledger::logdir::{self, LogDir};
use tierledger::scenario;
use tierledger_core::ledger::{replay_verify, LedgerState};
use tierledger_core::{classify_level, SystemConfig, Transaction};

const OK: u8 = 0;
const FAILED: u8 = 1;
const BAD_INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "tierledger", version, about = "Tiered programmable-money ledger")]
struct Cli {
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    /// Print a machine-readable report on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Start a log directory from a genesis config.
    Init { genesis: PathBuf, logdir: PathBuf },
    /// Run a scenario into a new log directory.
    Run { scenario: PathBuf, logdir: PathBuf },
    /// Re-execute a log and check every header and receipt.
    Replay { logdir: PathBuf },
    /// Print the programmability level of a transaction file.
    Classify { tx: PathBuf },
    /// Replay a log and print its final state digest.
    Digest { logdir: PathBuf },
}

/// Result of a command: exit code, JSON report and human-readable lines.
struct Outcome {
    code: u8,
    report: Value,
    lines: Vec<String>,
}

impl Outcome {
    fn fail(code: u8, command: &str, err: impl std::fmt::Display) -> Outcome {
        let msg = err.to_string();
        Outcome {
            code,
            report: json!({ "command": command, "ok": false, "exit_code": code, "error": msg }),
            lines: vec![format!("error: {msg}")],
        }
    }
}

fn init_logging() -> Result<(), String> {
    let level = std::env::var("TIERLEDGER_LOG_LEVEL").unwrap_or_else(|_| "error".into());
    let filter = match level.to_ascii_lowercase().as_str() {
        "error" => log::LevelFilter::Error,
        "info" => log::LevelFilter::Info,
        "debug" => log::LevelFilter::Debug,
        other => return Err(format!("TIERLEDGER_LOG_LEVEL must be error, info or debug, not {other:?}")),
    };
    env_logger::Builder::new().filter_level(filter).format_timestamp(None).target(env_logger::Target::Stderr).init();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_logging() {
        eprintln!("error: {e}");
        return ExitCode::from(BAD_INPUT);
    }
    let out = match &cli.cmd {
        Cmd::Init { genesis, logdir } => init(genesis, logdir),
        Cmd::Run { scenario, logdir } => run(scenario, logdir),
        Cmd::Replay { logdir } => replay(logdir, "replay"),
        Cmd::Classify { tx } => classify(tx),
        Cmd::Digest { logdir } => replay(logdir, "digest"),
    };
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&out.report).expect("report serializes"));
    } else if out.code != OK {
        for l in &out.lines {
            eprintln!("{l}");
        }
    } else if !cli.quiet {
        for l in &out.lines {
            println!("{l}");
        }
    }
    ExitCode::from(out.code)
}

fn init(genesis: &Path, dir: &Path) -> Outcome {
    let cfg: SystemConfig = match fs::read_to_string(genesis)
        .map_err(|e| format!("{}: {e}", genesis.display()))
        .and_then(|t| serde_json::from_str(&t).map_err(|e| format!("{}: {e}", genesis.display())))
    {
        Ok(c) => c,
        Err(e) => return Outcome::fail(BAD_INPUT, "init", e),
    };
    if let Err(e) = cfg.validate() {
        return Outcome::fail(BAD_INPUT, "init", format!("invalid genesis config: {e:?}"));
    }
    let state = LedgerState::genesis(cfg.clone());
    if let Err(e) = LogDir::create(dir, &cfg, &state.genesis_header()) {
        return Outcome::fail(BAD_INPUT, "init", e);
    }
    let digest = state.digest().to_string();
    Outcome {
        code: OK,
        report: json!({
            "command": "init", "ok": true, "exit_code": OK,
            "genesis_hash": state.genesis_hash.to_string(), "digest": digest,
        }),
        lines: vec![format!("genesis {}", state.genesis_hash), format!("digest {digest}")],
    }
}

fn run(path: &Path, dir: &Path) -> Outcome {
    let (report, _, _) = match scenario::run_file(path, Some(dir)) {
        Ok(r) => r,
        Err(e) => return Outcome::fail(BAD_INPUT, "run", e),
    };
    let code = if report.passed { OK } else { FAILED };
    let mut lines = Vec::new();
    for a in &report.assertions {
        let mark = if a.pass { "pass" } else { "FAIL" };
        let detail = if a.pass { String::new() } else { format!(": expected {}, got {}", a.expected, a.actual) };
        lines.push(format!("{mark} step {} {}{detail}", a.step, a.check));
    }
    lines.extend(report.notes.iter().map(|n| format!("note: {n}")));
    let passed = report.assertions.iter().filter(|a| a.pass).count();
    lines.push(format!(
        "{} batches, epoch {}, {passed}/{} assertions passed",
        report.batches,
        report.epoch,
        report.assertions.len()
    ));
    lines.push(format!("digest {}", report.digest));
    let mut v = serde_json::to_value(&report).expect("report serializes");
    let obj = v.as_object_mut().expect("report is an object");
    obj.insert("command".into(), json!("run"));
    obj.insert("ok".into(), json!(code == OK));
    obj.insert("exit_code".into(), json!(code));
    Outcome { code, report: v, lines }
}

fn replay(dir: &Path, command: &str) -> Outcome {
    let log = match logdir::load(dir) {
        Ok(l) => l,
        Err(e) => return Outcome::fail(BAD_INPUT, command, e),
    };
    match replay_verify(&log.cfg, &log.genesis, &log.entries, 1) {
        Ok(state) => {
            let digest = state.digest().to_string();
            let head = state.last_header.to_string();
            let lines = if command == "digest" {
                vec![digest.clone()]
            } else {
                vec![format!("ok: {} batches replayed, head {head}", log.entries.len()), format!("digest {digest}")]
            };
            Outcome {
                code: OK,
                report: json!({
                    "command": command, "ok": true, "exit_code": OK,
                    "batches": log.entries.len(), "epoch": state.epoch.0,
                    "digest": digest, "head": head, "divergence": null,
                }),
                lines,
            }
        }
        Err(d) => Outcome {
            code: FAILED,
            report: json!({
                "command": command, "ok": false, "exit_code": FAILED,
                "divergence": { "batch": d.batch, "field": d.field, "expected": d.expected, "found": d.found },
            }),
            lines: vec![d.to_string()],
        },
    }
}

fn classify(path: &Path) -> Outcome {
    let tx: Transaction = match fs::read_to_string(path)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
    {
        Ok(t) => t,
        Err(e) => return Outcome::fail(BAD_INPUT, "classify", format!("{}: {e}", path.display())),
    };
    let level = classify_level(&tx);
    Outcome {
        code: OK,
        report: json!({
            "command": "classify", "ok": true, "exit_code": OK,
            "level": level, "txid": tx.txid().to_string(),
        }),
        lines: vec![level.to_string()],
    }
}
