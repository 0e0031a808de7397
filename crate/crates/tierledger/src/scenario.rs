//! Scenario files: named keys, a genesis template and ordered steps, run
//! against a fresh ledger with every batch appended to a log.
//!
//! Submitted transactions queue up and are committed as one batch at the
//! current epoch when the clock advances, an assertion runs, a `seal` step
//! is reached, or the scenario ends. Each `advance_epoch` tick commits one
//! batch, empty or not, so the coinbase schedule follows the clock.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tierledger_core::crypto::{self, KeyPair, PublicKey};
use tierledger_core::ledger::{apply_batch, coinbase_outpoint, Batch, LedgerState, LogEntry};
use tierledger_core::model::{
    AccessDecl, Address, Amount, Epoch, Input, Level, Lock, MoveDirection, Outpoint, Output, Transaction, TxId, TxKind,
    Validity,
};
use tierledger_core::permission::{endorse_transaction, issue_credential, Intermediary};
use tierledger_core::{script, status, vm, SystemConfig};

use crate::logdir::{LogDir, LogError};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("scenario does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("genesis: {0}")]
    Genesis(String),
    #[error("step {step}: {msg}")]
    Step { step: usize, msg: String },
    #[error(transparent)]
    Log(#[from] LogError),
}

/// Deterministic key from a seed string.
pub fn key_from_seed(seed: &str) -> KeyPair {
    crypto::keygen(&crypto::sha256(seed.as_bytes()))
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub description: Option<String>,
    /// Key name to seed string.
    pub keys: BTreeMap<String, String>,
    pub genesis: GenesisTemplate,
    #[serde(default)]
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisTemplate {
    pub operator: String,
    /// Overrides for `SystemConfig` fields. Strings `$pk:name` and
    /// `$addr:name` are replaced by the named key or its address.
    #[serde(default)]
    pub config: serde_json::Map<String, Value>,
    #[serde(default)]
    pub outputs: Vec<OutputTemplate>,
    #[serde(default)]
    pub balances: BTreeMap<String, u64>,
    /// Key names registered as intermediaries.
    #[serde(default)]
    pub intermediaries: Vec<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    AdvanceEpoch {
        #[serde(default = "one")]
        by: u64,
    },
    Seal,
    Submit {
        #[serde(default)]
        label: Option<String>,
        tx: TxTemplate,
        #[serde(default)]
        validity: Option<Validity>,
        #[serde(default)]
        nonce: Option<u64>,
        #[serde(default)]
        endorse: Option<EndorseTemplate>,
        /// Leave the account signature off.
        #[serde(default)]
        unsigned: bool,
    },
    /// Recurring payment run on the payer's side: every `every` epochs after
    /// registration, build and submit an ordinary spend.
    ClientRule {
        payer: String,
        payee: String,
        amount: u64,
        every: u64,
        #[serde(default)]
        fee: Option<u64>,
    },
    AssertUtxoBalance {
        owner: String,
        equals: u64,
    },
    AssertBalance {
        account: String,
        equals: u64,
    },
    AssertStorage {
        contract: String,
        key: u64,
        equals: u64,
    },
    AssertReceipt {
        tx: String,
        status: StatusRef,
        #[serde(default)]
        gas_used: Option<u64>,
    },
    AssertDigestPrefix {
        prefix: String,
    },
}

#[derive(Clone, Debug, Deserialize, PartialEq, Eq)]
#[serde(untagged)]
pub enum StatusRef {
    Code(u16),
    Name(String),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndorseTemplate {
    pub by: String,
    /// Present for a per-user credential, absent for a per-transaction
    /// endorsement.
    #[serde(default)]
    pub expiry: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TxTemplate {
    /// Either explicit `inputs`, or `from`: coins of that key are selected
    /// to cover outputs plus `fee`, with change back to it.
    Spend {
        #[serde(default)]
        from: Option<String>,
        #[serde(default)]
        inputs: Vec<InputRef>,
        outputs: Vec<OutputTemplate>,
        #[serde(default)]
        fee: u64,
    },
    Deploy {
        payer: String,
        #[serde(default)]
        code: Option<String>,
        #[serde(default)]
        code_file: Option<String>,
        #[serde(default)]
        endowment: u64,
        gas_limit: u64,
        #[serde(default = "one")]
        gas_price: u64,
        #[serde(default)]
        footprint: AccessTemplate,
    },
    Call {
        caller: String,
        contract: String,
        #[serde(default)]
        arg: u64,
        #[serde(default)]
        attached: u64,
        gas_limit: u64,
        #[serde(default = "one")]
        gas_price: u64,
        #[serde(default)]
        addresses: Vec<String>,
        #[serde(default)]
        access: Option<AccessTemplate>,
    },
    /// Inputs as for `spend`; with `from` the selected coins cover `amount`.
    MoveToAccount {
        #[serde(default)]
        from: Option<String>,
        #[serde(default)]
        inputs: Vec<InputRef>,
        #[serde(default)]
        amount: Option<u64>,
        #[serde(default)]
        account: Option<String>,
        #[serde(default)]
        change: Vec<OutputTemplate>,
    },
    MoveToUtxo {
        owner: String,
        outputs: Vec<OutputTemplate>,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputRef {
    /// `genesis` or the label of an earlier transaction.
    #[serde(default)]
    pub tx: Option<String>,
    #[serde(default)]
    pub coinbase: Option<u64>,
    #[serde(default)]
    pub index: u32,
    /// Stack items, first deepest: `sig:name`, `pk:name`, `0x..` or `""`.
    #[serde(default)]
    pub witness: Option<Vec<String>>,
    /// Signers for a multisig lock, defaulting to the first `m` known keys.
    #[serde(default)]
    pub signers: Option<Vec<String>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputTemplate {
    pub amount: u64,
    #[serde(default)]
    pub to: Option<String>,
    #[serde(default)]
    pub multisig: Option<MultiSigTemplate>,
    /// Script assembly; `<pk:name>` and `<lock:name>` expand to the key and
    /// to the hash of its pay-to-key lock.
    #[serde(default)]
    pub script: Option<String>,
    #[serde(default)]
    pub script_file: Option<String>,
    #[serde(default)]
    pub expiry: Option<u64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiSigTemplate {
    pub m: u8,
    pub keys: Vec<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessTemplate {
    #[serde(default)]
    pub balances_read: Vec<String>,
    #[serde(default)]
    pub balances_written: Vec<String>,
    #[serde(default)]
    pub storage_read: Vec<(String, u64)>,
    #[serde(default)]
    pub storage_written: Vec<(String, u64)>,
    #[serde(default)]
    pub callees: Vec<String>,
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct AssertionResult {
    pub step: usize,
    pub check: String,
    pub pass: bool,
    pub expected: String,
    pub actual: String,
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct ReceiptLine {
    pub batch: u64,
    pub label: Option<String>,
    pub txid: String,
    pub status: u16,
    pub status_name: &'static str,
    pub level: Level,
    pub gas_used: u64,
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct Report {
    pub passed: bool,
    pub batches: u64,
    pub epoch: u64,
    pub digest: String,
    pub head: String,
    pub assertions: Vec<AssertionResult>,
    pub receipts: Vec<ReceiptLine>,
    pub notes: Vec<String>,
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    Ok(serde_json::from_str(&text)?)
}

/// Runs a scenario file. Relative `code_file`/`script_file` paths resolve
/// against the scenario's directory.
pub fn run_file(path: &Path, logdir: Option<&Path>) -> Result<(Report, Vec<LogEntry>, LedgerState), ScenarioError> {
    let scenario = load_scenario(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    run_scenario(&scenario, base, logdir)
}

pub fn run_scenario(
    scenario: &Scenario,
    base: &Path,
    logdir: Option<&Path>,
) -> Result<(Report, Vec<LogEntry>, LedgerState), ScenarioError> {
    let keys: BTreeMap<String, KeyPair> = scenario.keys.iter().map(|(n, s)| (n.clone(), key_from_seed(s))).collect();
    let mut runner = Runner {
        base: base.to_path_buf(),
        keys,
        state: LedgerState::genesis(SystemConfig::new(PublicKey([0; 32]))),
        log: None,
        log_error: None,
        entries: Vec::new(),
        queue: Vec::new(),
        reserved: BTreeSet::new(),
        queued_nonce: BTreeMap::new(),
        labels: BTreeMap::new(),
        txid_labels: BTreeMap::new(),
        rules: Vec::new(),
        assertions: Vec::new(),
        receipts: Vec::new(),
        notes: Vec::new(),
        step: 0,
        clock: 0,
    };
    let cfg = runner.build_config(&scenario.genesis).map_err(ScenarioError::Genesis)?;
    runner.state = LedgerState::genesis(cfg.clone());
    if let Some(dir) = logdir {
        runner.log = Some(LogDir::create(dir, &cfg, &runner.state.genesis_header())?);
    }
    for (i, step) in scenario.steps.iter().enumerate() {
        runner.step = i + 1;
        runner.run_step(step).map_err(|msg| ScenarioError::Step { step: i + 1, msg })?;
        if let Some(e) = runner.log_error.take() {
            return Err(e.into());
        }
    }
    if !runner.queue.is_empty() {
        runner.seal();
    }
    if let Some(e) = runner.log_error.take() {
        return Err(e.into());
    }
    let report = Report {
        passed: runner.assertions.iter().all(|a| a.pass),
        batches: runner.state.height,
        epoch: runner.state.epoch.0,
        digest: runner.state.digest().to_string(),
        head: runner.state.last_header.to_string(),
        assertions: runner.assertions,
        receipts: runner.receipts,
        notes: runner.notes,
    };
    Ok((report, runner.entries, runner.state))
}

struct Rule {
    payer: String,
    payee: String,
    amount: u64,
    every: u64,
    fee: u64,
    start: u64,
}

struct Runner {
    base: PathBuf,
    keys: BTreeMap<String, KeyPair>,
    state: LedgerState,
    log: Option<LogDir>,
    log_error: Option<LogError>,
    entries: Vec<LogEntry>,
    queue: Vec<Transaction>,
    reserved: BTreeSet<Outpoint>,
    queued_nonce: BTreeMap<Address, u64>,
    labels: BTreeMap<String, TxId>,
    txid_labels: BTreeMap<TxId, String>,
    rules: Vec<Rule>,
    assertions: Vec<AssertionResult>,
    receipts: Vec<ReceiptLine>,
    notes: Vec<String>,
    step: usize,
    /// Epoch of the next batch.
    clock: u64,
}

type StepResult<T> = Result<T, String>;

fn parse_hex(s: &str) -> StepResult<Vec<u8>> {
    hex::decode(s).map_err(|e| format!("bad hex {s:?}: {e}"))
}

impl Runner {
    fn key(&self, name: &str) -> StepResult<&KeyPair> {
        self.keys.get(name).ok_or_else(|| format!("unknown key {name:?}"))
    }

    fn pk(&self, name: &str) -> StepResult<PublicKey> {
        self.key(name).map(|k| k.public())
    }

    /// `@label` names a deployed contract, `0x..` is a literal, anything
    /// else is a key name.
    fn addr(&self, r: &str) -> StepResult<Address> {
        if let Some(label) = r.strip_prefix('@') {
            let txid = self.labels.get(label).ok_or_else(|| format!("unknown label {label:?}"))?;
            return Ok(Address(txid.0));
        }
        if let Some(h) = r.strip_prefix("0x") {
            let bytes = parse_hex(h)?;
            return bytes.try_into().map(Address).map_err(|_| format!("{r} is not 32 bytes"));
        }
        Ok(Address::from_public_key(&self.pk(r)?))
    }

    fn read_file(&self, rel: &str) -> StepResult<String> {
        let p = self.base.join(rel);
        fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))
    }

    fn build_config(&self, g: &GenesisTemplate) -> StepResult<SystemConfig> {
        let mut cfg = SystemConfig::new(self.pk(&g.operator)?);
        for o in &g.outputs {
            cfg.genesis_outputs.push(self.output(o)?);
        }
        for (name, amount) in &g.balances {
            cfg.genesis_balances.insert(self.addr(name)?, Amount(*amount));
        }
        for name in &g.intermediaries {
            cfg.intermediary_registry.push(Intermediary { name: name.clone(), key: self.pk(name)? });
        }
        let mut v = serde_json::to_value(&cfg).map_err(|e| e.to_string())?;
        let fields = v.as_object_mut().expect("config serializes to an object");
        for (k, val) in &g.config {
            if !fields.contains_key(k) {
                return Err(format!("unknown config field {k:?}"));
            }
            fields.insert(k.clone(), self.substitute(val)?);
        }
        let cfg: SystemConfig = serde_json::from_value(v).map_err(|e| e.to_string())?;
        cfg.validate().map_err(|e| format!("{e:?}"))?;
        Ok(cfg)
    }

    fn substitute(&self, v: &Value) -> StepResult<Value> {
        Ok(match v {
            Value::String(s) => {
                if let Some(n) = s.strip_prefix("$pk:") {
                    Value::String(hex::encode(self.pk(n)?.0))
                } else if let Some(n) = s.strip_prefix("$addr:") {
                    Value::String(self.addr(n)?.to_string())
                } else {
                    v.clone()
                }
            }
            Value::Array(items) => Value::Array(items.iter().map(|i| self.substitute(i)).collect::<Result<_, _>>()?),
            Value::Object(m) => {
                Value::Object(m.iter().map(|(k, i)| Ok((k.clone(), self.substitute(i)?))).collect::<StepResult<_>>()?)
            }
            _ => v.clone(),
        })
    }

    fn expand_script(&self, src: &str) -> StepResult<Vec<u8>> {
        let mut out = String::with_capacity(src.len());
        let mut rest = src;
        while let Some(open) = rest.find('<') {
            out.push_str(&rest[..open]);
            let close = rest[open..].find('>').ok_or("unclosed <")? + open;
            let token = &rest[open + 1..close];
            let bytes = match token.split_once(':') {
                Some(("pk", n)) => self.pk(n)?.0,
                Some(("lock", n)) => Lock::PubKey(self.pk(n)?).address().0,
                _ => return Err(format!("unknown placeholder <{token}>")),
            };
            out.push_str("0x");
            out.push_str(&hex::encode(bytes));
            rest = &rest[close + 1..];
        }
        out.push_str(rest);
        script::assemble(&out).map_err(|e| format!("script: {e:?}"))
    }

    fn output(&self, t: &OutputTemplate) -> StepResult<Output> {
        let lock = match (&t.to, &t.multisig, &t.script, &t.script_file) {
            (Some(to), None, None, None) => Lock::PubKey(self.pk(to)?),
            (None, Some(ms), None, None) => Lock::MultiSig {
                m: ms.m,
                keys: ms.keys.iter().map(|k| self.pk(k)).collect::<StepResult<_>>()?,
            },
            (None, None, Some(src), None) => Lock::Script(self.expand_script(src)?),
            (None, None, None, Some(f)) => Lock::Script(self.expand_script(&self.read_file(f)?)?),
            _ => return Err("output needs exactly one of to, multisig, script, script_file".into()),
        };
        Ok(Output { amount: Amount(t.amount), lock, expiry: t.expiry.map(Epoch) })
    }

    fn access(&self, t: &AccessTemplate) -> StepResult<AccessDecl> {
        let addrs = |v: &[String]| v.iter().map(|a| self.addr(a)).collect::<StepResult<BTreeSet<_>>>();
        let slots = |v: &[(String, u64)]| v.iter().map(|(a, k)| Ok((self.addr(a)?, *k))).collect::<StepResult<BTreeSet<_>>>();
        Ok(AccessDecl {
            balances_read: addrs(&t.balances_read)?,
            balances_written: addrs(&t.balances_written)?,
            storage_read: slots(&t.storage_read)?,
            storage_written: slots(&t.storage_written)?,
            callees: addrs(&t.callees)?,
        })
    }

    fn outpoint(&self, r: &InputRef) -> StepResult<Outpoint> {
        match (&r.tx, r.coinbase) {
            (Some(t), None) if t == "genesis" => Ok(Outpoint::new(TxId(self.state.genesis_hash.0), r.index)),
            (Some(t), None) => {
                let txid = self.labels.get(t).ok_or_else(|| format!("unknown label {t:?}"))?;
                Ok(Outpoint::new(*txid, r.index))
            }
            (None, Some(n)) => Ok(coinbase_outpoint(n)),
            _ => Err("input needs exactly one of tx, coinbase".into()),
        }
    }

    /// Output behind an outpoint, from state or from a queued transaction.
    fn find_output(&self, op: &Outpoint) -> Option<Output> {
        if let Some(o) = self.state.utxos.get(op) {
            return Some(o.clone());
        }
        self.queue
            .iter()
            .find(|t| t.txid() == op.txid)
            .and_then(|t| t.created_outputs().get(op.index as usize).cloned())
    }

    /// Unreserved, unexpired pay-to-key coins of `name`, in outpoint order,
    /// until they cover `need`.
    fn select(&self, name: &str, need: u64) -> StepResult<(Vec<InputRef>, Vec<Outpoint>, u64)> {
        let lock = Lock::PubKey(self.pk(name)?);
        let epoch = self.clock;
        let mut picked = Vec::new();
        let mut total = 0u64;
        for (op, out) in self.state.utxos.iter() {
            if total >= need && !picked.is_empty() {
                break;
            }
            if out.lock != lock || self.reserved.contains(op) || out.expiry.is_some_and(|e| e.0 <= epoch) {
                continue;
            }
            picked.push(*op);
            total += out.amount.0;
        }
        if total < need || picked.is_empty() {
            return Err(format!("{name} holds {total} in spendable coins, needs {need}"));
        }
        let refs = picked.iter().map(|_| InputRef { tx: None, coinbase: None, index: 0, witness: None, signers: None }).collect();
        Ok((refs, picked, total))
    }

    fn inputs(&self, from: &Option<String>, refs: &[InputRef], need: u64) -> StepResult<(Vec<InputRef>, Vec<Outpoint>, u64)> {
        match from {
            Some(name) if refs.is_empty() => self.select(name, need),
            None if !refs.is_empty() => {
                let ops = refs.iter().map(|r| self.outpoint(r)).collect::<StepResult<Vec<_>>>()?;
                Ok((refs.to_vec(), ops, 0))
            }
            _ => Err("give either from or inputs".into()),
        }
    }

    fn witness(&self, r: &InputRef, op: &Outpoint, msg: &[u8; 32]) -> StepResult<Vec<Vec<u8>>> {
        if let Some(items) = &r.witness {
            return items
                .iter()
                .map(|item| {
                    if item.is_empty() {
                        Ok(vec![])
                    } else if let Some(n) = item.strip_prefix("sig:") {
                        Ok(self.key(n)?.sign(msg).0.to_vec())
                    } else if let Some(n) = item.strip_prefix("pk:") {
                        Ok(self.pk(n)?.0.to_vec())
                    } else if let Some(h) = item.strip_prefix("0x") {
                        parse_hex(h)
                    } else {
                        Err(format!("bad witness item {item:?}"))
                    }
                })
                .collect();
        }
        let Some(out) = self.find_output(op) else { return Ok(vec![]) };
        let by_pk = |pk: &PublicKey| self.keys.values().find(|k| k.public() == *pk);
        Ok(match &out.lock {
            Lock::PubKey(pk) => by_pk(pk).map(|k| vec![k.sign(msg).0.to_vec()]).unwrap_or_default(),
            Lock::MultiSig { m, keys } => {
                let chosen: Vec<PublicKey> = match &r.signers {
                    Some(names) => names.iter().map(|n| self.pk(n)).collect::<StepResult<_>>()?,
                    None => keys.iter().filter(|k| by_pk(k).is_some()).take(*m as usize).copied().collect(),
                };
                keys.iter()
                    .filter(|k| chosen.contains(k))
                    .filter_map(|k| by_pk(k).map(|kp| kp.sign(msg).0.to_vec()))
                    .collect()
            }
            Lock::Script(_) => vec![],
        })
    }

    fn build(&mut self, t: &TxTemplate) -> StepResult<(Transaction, Vec<InputRef>)> {
        let outs = |ts: &[OutputTemplate]| ts.iter().map(|o| self.output(o)).collect::<StepResult<Vec<_>>>();
        Ok(match t {
            TxTemplate::Spend { from, inputs, outputs, fee } => {
                let mut outputs = outs(outputs)?;
                let need = outputs.iter().map(|o| o.amount.0).sum::<u64>() + fee;
                let (refs, ops, total) = self.inputs(from, inputs, need)?;
                if let Some(name) = from {
                    if total > need {
                        outputs.push(Output::new(total - need, Lock::PubKey(self.pk(name)?)));
                    }
                }
                let inputs = ops.into_iter().map(Input::new).collect();
                (Transaction::new(TxKind::UtxoSpend { inputs, outputs }), refs)
            }
            TxTemplate::MoveToAccount { from, inputs, amount, account, change } => {
                let mut change = outs(change)?;
                let need = amount.unwrap_or(0) + change.iter().map(|o| o.amount.0).sum::<u64>();
                let (refs, ops, total) = self.inputs(from, inputs, need)?;
                if let Some(name) = from {
                    if total > need {
                        change.push(Output::new(total - need, Lock::PubKey(self.pk(name)?)));
                    }
                }
                let account = match (account, from) {
                    (Some(a), _) => self.addr(a)?,
                    (None, Some(f)) => self.addr(f)?,
                    (None, None) => return Err("move_to_account needs account".into()),
                };
                let inputs = ops.into_iter().map(Input::new).collect();
                (Transaction::new(TxKind::Move(MoveDirection::ToAccount { inputs, account, change })), refs)
            }
            TxTemplate::MoveToUtxo { owner, outputs } => {
                let kind = TxKind::Move(MoveDirection::ToUtxo { owner: self.pk(owner)?, outputs: outs(outputs)? });
                (Transaction::new(kind), vec![])
            }
            TxTemplate::Deploy { payer, code, code_file, endowment, gas_limit, gas_price, footprint } => {
                let src = match (code, code_file) {
                    (Some(c), None) => c.clone(),
                    (None, Some(f)) => self.read_file(f)?,
                    _ => return Err("deploy needs exactly one of code, code_file".into()),
                };
                let code = vm::assemble(&src, |n| self.addr(n).ok().or_else(|| self.addr(&format!("@{n}")).ok()))
                    .map_err(|e| format!("contract: {e:?}"))?;
                let kind = TxKind::Deploy {
                    code,
                    endowment: Amount(*endowment),
                    payer: self.pk(payer)?,
                    gas_limit: *gas_limit,
                    gas_price: *gas_price,
                    footprint: self.access(footprint)?,
                };
                (Transaction::new(kind), vec![])
            }
            TxTemplate::Call { caller, contract, arg, attached, gas_limit, gas_price, addresses, access } => {
                let kind = TxKind::Call {
                    contract: self.addr(contract)?,
                    arg: *arg,
                    attached: Amount(*attached),
                    caller: self.pk(caller)?,
                    gas_limit: *gas_limit,
                    gas_price: *gas_price,
                    addresses: addresses.iter().map(|a| self.addr(a)).collect::<StepResult<_>>()?,
                    access: access.as_ref().map(|a| self.access(a)).transpose()?,
                };
                (Transaction::new(kind), vec![])
            }
        })
    }

    fn submit(
        &mut self,
        label: Option<&str>,
        t: &TxTemplate,
        validity: Option<Validity>,
        nonce: Option<u64>,
        endorse: Option<&EndorseTemplate>,
        unsigned: bool,
    ) -> StepResult<TxId> {
        let (mut tx, refs) = self.build(t)?;
        tx.validity = validity;
        if let Some(signer) = tx.account_signer() {
            let who = Address::from_public_key(&signer);
            let queued = self.queued_nonce.entry(who).or_default();
            tx.nonce = nonce.unwrap_or(self.state.accounts.nonce(&who) + *queued);
            *queued += 1;
        } else if let Some(n) = nonce {
            tx.nonce = n;
        }
        let txid = tx.txid();
        let ops: Vec<Outpoint> = tx.inputs().iter().map(|i| i.outpoint).collect();
        for (i, op) in ops.iter().enumerate() {
            let msg = tierledger_core::model::signing_message(&txid, i as u32);
            let r = refs.get(i).cloned().unwrap_or(InputRef { tx: None, coinbase: None, index: 0, witness: None, signers: None });
            let w = self.witness(&r, op, &msg)?;
            tx.inputs_mut().expect("inputs exist")[i].witness = w;
            self.reserved.insert(*op);
        }
        if let Some(e) = endorse {
            let k = self.key(&e.by)?;
            tx.endorsement = Some(match e.expiry {
                Some(x) => {
                    let user = tx.account_signer().ok_or("per-user credentials apply to account transactions")?;
                    issue_credential(k, user, Epoch(x))
                }
                None => endorse_transaction(k, &txid),
            });
        }
        if !unsigned {
            if let Some(signer) = tx.account_signer() {
                let kp = self.keys.values().find(|k| k.public() == signer).ok_or("signer key unknown")?.clone();
                tx.sign_account(&kp);
            }
        }
        if let Some(l) = label {
            if self.labels.insert(l.to_string(), txid).is_some() {
                return Err(format!("label {l:?} reused"));
            }
            self.txid_labels.insert(txid, l.to_string());
        }
        debug!("queued {} {}", label.unwrap_or("-"), txid);
        self.queue.push(tx);
        Ok(txid)
    }

    fn seal(&mut self) {
        let batch = Batch { number: self.state.height + 1, epoch: Epoch(self.clock), txs: std::mem::take(&mut self.queue) };
        let (receipts, header) = apply_batch(&mut self.state, &batch).expect("runner numbers batches and keeps epochs monotone");
        info!("batch {} epoch {}: {} txs, digest {}", batch.number, batch.epoch, batch.txs.len(), header.state_digest);
        for r in &receipts {
            let name = status::name(r.status).unwrap_or("Unknown");
            debug!("  {} {} gas {}", r.txid, name, r.gas_used);
            self.receipts.push(ReceiptLine {
                batch: batch.number,
                label: self.txid_labels.get(&r.txid).cloned(),
                txid: r.txid.to_string(),
                status: r.status,
                status_name: name,
                level: r.level,
                gas_used: r.gas_used,
            });
        }
        let entry = LogEntry { batch, header, receipts };
        if let Some(log) = &self.log {
            if let Err(e) = log.append(&entry) {
                self.log_error.get_or_insert(e);
            }
        }
        self.entries.push(entry);
        self.reserved.clear();
        self.queued_nonce.clear();
    }

    fn seal_pending(&mut self) {
        if !self.queue.is_empty() {
            self.seal();
        }
    }

    fn check(&mut self, check: String, expected: String, actual: String) {
        let pass = expected == actual;
        if !pass {
            warn!("step {}: {check}: expected {expected}, got {actual}", self.step);
        }
        self.assertions.push(AssertionResult { step: self.step, check, pass, expected, actual });
    }

    fn run_step(&mut self, step: &Step) -> StepResult<()> {
        match step {
            Step::AdvanceEpoch { by } => {
                self.seal_pending();
                for _ in 0..*by {
                    self.clock += 1;
                    self.fire_rules();
                    self.seal();
                }
            }
            Step::Seal => self.seal(),
            Step::Submit { label, tx, validity, nonce, endorse, unsigned } => {
                self.submit(label.as_deref(), tx, *validity, *nonce, endorse.as_ref(), *unsigned)?;
            }
            Step::ClientRule { payer, payee, amount, every, fee } => {
                if *every == 0 {
                    return Err("client rule period must be positive".into());
                }
                self.pk(payer)?;
                self.pk(payee)?;
                let fee = fee.unwrap_or(self.state.cfg.min_fee.0);
                self.rules.push(Rule {
                    payer: payer.clone(),
                    payee: payee.clone(),
                    amount: *amount,
                    every: *every,
                    fee,
                    start: self.clock,
                });
            }
            Step::AssertUtxoBalance { owner, equals } => {
                self.seal_pending();
                let lock = Lock::PubKey(self.pk(owner)?);
                let held: u64 = self.state.utxos.iter().filter(|(_, o)| o.lock == lock).map(|(_, o)| o.amount.0).sum();
                self.check(format!("utxo balance of {owner}"), equals.to_string(), held.to_string());
            }
            Step::AssertBalance { account, equals } => {
                self.seal_pending();
                let a = self.addr(account)?;
                let held = self.state.accounts.balance(&a).0;
                self.check(format!("account balance of {account}"), equals.to_string(), held.to_string());
            }
            Step::AssertStorage { contract, key, equals } => {
                self.seal_pending();
                let c = self.addr(contract)?;
                let v = self.state.accounts.storage(&c, *key);
                self.check(format!("storage {contract}[{key}]"), equals.to_string(), v.to_string());
            }
            Step::AssertReceipt { tx, status: want, gas_used } => {
                self.seal_pending();
                let txid = *self.labels.get(tx).ok_or_else(|| format!("unknown label {tx:?}"))?;
                let want = match want {
                    StatusRef::Code(c) => *c,
                    StatusRef::Name(n) => status::from_name(n).ok_or_else(|| format!("unknown status {n:?}"))?,
                };
                let got = self.entries.iter().rev().flat_map(|e| e.receipts.iter().rev()).find(|r| r.txid == txid).cloned();
                let show = |code: u16| format!("{} ({code})", status::name(code).unwrap_or("Unknown"));
                let actual = got.as_ref().map_or("no receipt".to_string(), |r| show(r.status));
                self.check(format!("receipt status of {tx}"), show(want), actual);
                if let Some(g) = gas_used {
                    let actual = got.map_or("no receipt".to_string(), |r| r.gas_used.to_string());
                    self.check(format!("gas used by {tx}"), g.to_string(), actual);
                }
            }
            Step::AssertDigestPrefix { prefix } => {
                self.seal_pending();
                let d = self.state.digest().to_string();
                let p = prefix.to_lowercase();
                let actual = d.get(..p.len()).unwrap_or(&d).to_string();
                self.check("state digest prefix".into(), p, actual);
            }
        }
        Ok(())
    }

    /// Rules run as the payer's own automation would: a plain spend built
    /// from the payer's coins. A payer without funds skips that firing.
    fn fire_rules(&mut self) {
        let due: Vec<(usize, String, String, u64, u64)> = self
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| self.clock > r.start && (self.clock - r.start) % r.every == 0)
            .map(|(i, r)| (i, r.payer.clone(), r.payee.clone(), r.amount, r.fee))
            .collect();
        for (i, payer, payee, amount, fee) in due {
            let t = TxTemplate::Spend {
                from: Some(payer.clone()),
                inputs: vec![],
                outputs: vec![OutputTemplate {
                    amount,
                    to: Some(payee.clone()),
                    multisig: None,
                    script: None,
                    script_file: None,
                    expiry: None,
                }],
                fee,
            };
            let label = format!("rule{}@{}", i + 1, self.clock);
            match self.submit(Some(&label), &t, None, None, None, false) {
                Ok(_) => info!("client rule {} paid {amount} from {payer} to {payee} at epoch {}", i + 1, self.clock),
                Err(e) => {
                    warn!("client rule {} skipped at epoch {}: {e}", i + 1, self.clock);
                    self.notes.push(format!("client rule {} skipped at epoch {}: {e}", i + 1, self.clock));
                }
            }
        }
    }
}
