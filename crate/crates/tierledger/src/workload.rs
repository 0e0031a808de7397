//! Random workloads over every transaction level, built against the live
//! state so that most transactions apply and a controlled share fail.
//!
//! The mix covers pay-to-key spends (with and without expiring outputs),
//! validity windows including future ones that wait in the pending pool,
//! multisig, hash-lock and covenant scripts, moves in both directions,
//! deploys and calls of two small contracts, plus double spends, wrong
//! signatures and stale nonces.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tierledger_core::crypto::{self, KeyPair, PublicKey};
use tierledger_core::ledger::{apply_batch, Batch, BatchHeader, LedgerState, LogEntry};
use tierledger_core::model::{
    signing_message, AccessDecl, Address, Amount, Epoch, Input, Lock, MoveDirection, Outpoint, Output, Transaction,
    TxKind, Validity,
};
use tierledger_core::{script, vm, AccessMode, SystemConfig};

/// Adds `ARG` to storage slot 0 and returns the new value.
pub const COUNTER: &str = "PUSHI 0 PUSHI 0 SLOAD ARG ADD SSTORE PUSHI 0 SLOAD RETURN";
/// Sends `ARG` from the contract balance to the caller.
pub const PAYOUT: &str = "ARG CALLER TRANSFER HALT";

pub const USERS: usize = 8;

#[derive(Clone, Copy, Debug)]
pub struct Params {
    pub batches: u64,
    pub txs_per_batch: usize,
    pub access_mode: AccessMode,
}

impl Default for Params {
    fn default() -> Self {
        Params { batches: 25, txs_per_batch: 40, access_mode: AccessMode::Dynamic }
    }
}

/// How a script-locked coin is unlocked.
#[derive(Clone, Debug)]
enum Recipe {
    /// Push this preimage.
    Preimage(Vec<u8>),
    /// Anyone may spend, but only to this user's key.
    CovenantTo(usize),
}

pub struct Generator {
    rng: ChaCha8Rng,
    keys: Vec<KeyPair>,
    scripts: BTreeMap<Vec<u8>, Recipe>,
    contracts: Vec<(Address, &'static str)>,
    epoch_step: u64,
    // per-batch bookkeeping, reset by `next_batch`
    reserved: BTreeSet<Outpoint>,
    nonces: BTreeMap<Address, u64>,
}

pub fn user_key(seed: u64, i: usize) -> KeyPair {
    crypto::keygen(&crypto::sha256(format!("workload {seed} user {i}").as_bytes()))
}

/// Genesis for a workload: user 0 operates, every user starts with four
/// coins and an account balance.
pub fn genesis(seed: u64, params: &Params) -> SystemConfig {
    let keys: Vec<KeyPair> = (0..USERS).map(|i| user_key(seed, i)).collect();
    let mut cfg = SystemConfig::new(keys[0].public());
    cfg.initial_subsidy = Amount(50);
    cfg.halving_interval = 16;
    cfg.min_fee = Amount(1);
    cfg.min_gas_price = 1;
    cfg.covenants = true;
    cfg.expiry_enabled = true;
    cfg.access_mode = params.access_mode;
    for k in &keys {
        for _ in 0..4 {
            cfg.genesis_outputs.push(Output::new(10_000, Lock::PubKey(k.public())));
        }
        cfg.genesis_balances.insert(Address::from_public_key(&k.public()), Amount(50_000));
    }
    cfg
}

impl Generator {
    pub fn new(seed: u64) -> Generator {
        Generator {
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed),
            keys: (0..USERS).map(|i| user_key(seed, i)).collect(),
            scripts: BTreeMap::new(),
            contracts: Vec::new(),
            epoch_step: 0,
            reserved: BTreeSet::new(),
            nonces: BTreeMap::new(),
        }
    }

    fn user_of(&self, pk: &PublicKey) -> Option<usize> {
        self.keys.iter().position(|k| k.public() == *pk)
    }

    fn addr(&self, u: usize) -> Address {
        Address::from_public_key(&self.keys[u].public())
    }

    fn next_nonce(&mut self, state: &LedgerState, u: usize) -> u64 {
        let a = self.addr(u);
        let queued = self.nonces.entry(a).or_default();
        let n = state.accounts.nonce(&a) + *queued;
        *queued += 1;
        n
    }

    /// A random unreserved coin this generator knows how to unlock.
    fn coin(&mut self, state: &LedgerState) -> Option<(Outpoint, Output)> {
        let epoch = state.epoch.0 + self.epoch_step;
        let spendable: Vec<(Outpoint, Output)> = state
            .utxos
            .iter()
            .filter(|(op, o)| !self.reserved.contains(op) && o.expiry.map_or(true, |e| e.0 > epoch))
            .filter(|(_, o)| match &o.lock {
                Lock::PubKey(pk) => self.user_of(pk).is_some(),
                Lock::MultiSig { .. } => true,
                Lock::Script(code) => self.scripts.contains_key(code),
            })
            .map(|(op, o)| (*op, o.clone()))
            .collect();
        let picked = spendable.choose(&mut self.rng).cloned()?;
        self.reserved.insert(picked.0);
        Some(picked)
    }

    fn random_lock(&mut self) -> Lock {
        let u = self.rng.gen_range(0..USERS);
        match self.rng.gen_range(0..10) {
            0 => {
                let mut keys: Vec<PublicKey> = (0..USERS).map(|i| self.keys[i].public()).collect();
                keys.shuffle(&mut self.rng);
                keys.truncate(self.rng.gen_range(1..=3));
                Lock::MultiSig { m: self.rng.gen_range(1..=keys.len() as u8), keys }
            }
            1 => {
                let preimage: Vec<u8> = (0..self.rng.gen_range(1..16)).map(|_| self.rng.gen()).collect();
                let code = script::assemble(&format!(
                    "SHA256 0x{} EQUAL",
                    hex::encode(crypto::sha256(&preimage))
                ))
                .expect("hash lock assembles");
                self.scripts.insert(code.clone(), Recipe::Preimage(preimage));
                Lock::Script(code)
            }
            2 => {
                let target = Lock::PubKey(self.keys[u].public()).address();
                let code = script::assemble(&format!("0x{} 0x01 COVENANT TRUE", hex::encode(target.0)))
                    .expect("covenant assembles");
                self.scripts.insert(code.clone(), Recipe::CovenantTo(u));
                Lock::Script(code)
            }
            _ => Lock::PubKey(self.keys[u].public()),
        }
    }

    /// Splits `total` into one or two outputs. A covenant input forces
    /// every output to its target.
    fn outputs(&mut self, total: u64, forced: Option<usize>, epoch: u64) -> Vec<Output> {
        let parts = if total >= 2 && self.rng.gen_bool(0.5) { 2 } else { 1 };
        let mut out = Vec::new();
        let mut left = total;
        for i in 0..parts {
            let amount = if i + 1 == parts { left } else { self.rng.gen_range(1..left) };
            left -= amount;
            let lock = match forced {
                Some(u) => Lock::PubKey(self.keys[u].public()),
                None => self.random_lock(),
            };
            let expiry = (forced.is_none() && self.rng.gen_bool(0.15)).then(|| Epoch(epoch + self.rng.gen_range(1..6)));
            out.push(Output { amount: Amount(amount), lock, expiry });
        }
        out
    }

    fn witness(&mut self, lock: &Lock, msg: &[u8; 32]) -> Vec<Vec<u8>> {
        match lock {
            Lock::PubKey(pk) => {
                let u = self.user_of(pk).expect("coin filter keeps known keys");
                vec![self.keys[u].sign(msg).0.to_vec()]
            }
            Lock::MultiSig { m, keys } => keys
                .iter()
                .take(*m as usize)
                .map(|pk| self.keys[self.user_of(pk).expect("generated keys")].sign(msg).0.to_vec())
                .collect(),
            Lock::Script(code) => match &self.scripts[code] {
                Recipe::Preimage(p) => vec![p.clone()],
                Recipe::CovenantTo(_) => vec![],
            },
        }
    }

    fn sign_inputs(&mut self, tx: &mut Transaction, locks: &[Lock]) {
        let txid = tx.txid();
        for (i, lock) in locks.iter().enumerate() {
            let w = self.witness(lock, &signing_message(&txid, i as u32));
            tx.inputs_mut().expect("spend has inputs")[i].witness = w;
        }
    }

    fn spend(&mut self, state: &LedgerState, epoch: u64, windowed: bool) -> Option<Transaction> {
        let n = self.rng.gen_range(1..=2);
        let coins: Vec<(Outpoint, Output)> = (0..n).filter_map(|_| self.coin(state)).collect();
        if coins.is_empty() {
            return None;
        }
        let total: u64 = coins.iter().map(|(_, o)| o.amount.0).sum();
        let forced = coins.iter().find_map(|(_, o)| match &o.lock {
            Lock::Script(c) => match self.scripts.get(c) {
                Some(Recipe::CovenantTo(u)) => Some(*u),
                _ => None,
            },
            _ => None,
        });
        let fee = self.rng.gen_range(1..=3).min(total);
        if total <= fee {
            return None;
        }
        let outputs = self.outputs(total - fee, forced, epoch);
        let inputs = coins.iter().map(|(op, _)| Input::new(*op)).collect();
        let mut tx = Transaction::new(TxKind::UtxoSpend { inputs, outputs });
        if windowed {
            tx.validity = Some(if self.rng.gen_bool(0.3) {
                Validity { not_before: Some(Epoch(epoch + self.rng.gen_range(1..3))), not_after: None }
            } else {
                Validity { not_before: Some(Epoch(epoch.saturating_sub(1))), not_after: Some(Epoch(epoch + 2)) }
            });
        }
        let locks: Vec<Lock> = coins.iter().map(|(_, o)| o.lock.clone()).collect();
        self.sign_inputs(&mut tx, &locks);
        Some(tx)
    }

    fn move_to_account(&mut self, state: &LedgerState) -> Option<Transaction> {
        let (op, out) = self.coin(state)?;
        let Lock::PubKey(pk) = out.lock else {
            self.reserved.remove(&op);
            return None;
        };
        let change = if out.amount.0 > 1 && self.rng.gen_bool(0.5) {
            vec![Output::new(out.amount.0 / 2, Lock::PubKey(pk))]
        } else {
            vec![]
        };
        let to = self.rng.gen_range(0..USERS);
        let account = self.addr(to);
        let mut tx =
            Transaction::new(TxKind::Move(MoveDirection::ToAccount { inputs: vec![Input::new(op)], account, change }));
        self.sign_inputs(&mut tx, &[out.lock]);
        Some(tx)
    }

    fn move_to_utxo(&mut self, state: &LedgerState, epoch: u64) -> Transaction {
        let u = self.rng.gen_range(0..USERS);
        let amount = self.rng.gen_range(1..2_000);
        let outputs = self.outputs(amount, None, epoch);
        let mut tx = Transaction::new(TxKind::Move(MoveDirection::ToUtxo { owner: self.keys[u].public(), outputs }));
        tx.nonce = self.next_nonce(state, u);
        tx.sign_account(&self.keys[u]);
        tx
    }

    fn deploy(&mut self, state: &LedgerState) -> Transaction {
        let u = self.rng.gen_range(0..USERS);
        let src = if self.rng.gen_bool(0.5) { COUNTER } else { PAYOUT };
        let code = vm::assemble(src, |_| None).expect("fixed contracts assemble");
        let endowment = if src == PAYOUT { self.rng.gen_range(0..500) } else { 0 };
        let mut tx = Transaction::new(TxKind::Deploy {
            code,
            endowment: Amount(endowment),
            payer: self.keys[u].public(),
            gas_limit: 100,
            gas_price: 1,
            footprint: AccessDecl::default(),
        });
        tx.nonce = self.next_nonce(state, u);
        tx.sign_account(&self.keys[u]);
        self.contracts.push((Address(tx.txid().0), src));
        tx
    }

    fn call(&mut self, state: &LedgerState) -> Option<Transaction> {
        let live: Vec<(Address, &'static str)> =
            self.contracts.iter().copied().filter(|(a, _)| state.accounts.contracts.contains_key(a)).collect();
        let (contract, src) = *live.choose(&mut self.rng)?;
        let u = self.rng.gen_range(0..USERS);
        let caller = self.addr(u);
        let arg = self.rng.gen_range(0..50);
        let gas_limit = if self.rng.gen_bool(0.1) { self.rng.gen_range(1..10) } else { 60 };
        let access = (state.cfg.access_mode == AccessMode::Declared).then(|| {
            let mut d = AccessDecl {
                balances_written: [caller, contract].into(),
                storage_written: [(contract, 0)].into(),
                ..Default::default()
            };
            if src == PAYOUT {
                d.storage_written.clear();
            }
            d
        });
        let mut tx = Transaction::new(TxKind::Call {
            contract,
            arg,
            attached: Amount(self.rng.gen_range(0..20)),
            caller: self.keys[u].public(),
            gas_limit,
            gas_price: 1,
            addresses: vec![],
            access,
        });
        tx.nonce = self.next_nonce(state, u);
        tx.sign_account(&self.keys[u]);
        Some(tx)
    }

    /// A transaction that must be rejected: a double spend, a wrong
    /// signature or a stale nonce.
    fn faulty(&mut self, state: &LedgerState, batch: &[Transaction], epoch: u64) -> Option<Transaction> {
        match self.rng.gen_range(0..3) {
            0 => {
                let prev = batch.iter().find(|t| matches!(t.kind, TxKind::UtxoSpend { .. }))?;
                let mut tx = prev.clone();
                if let TxKind::UtxoSpend { outputs, .. } = &mut tx.kind {
                    outputs[0].amount.0 = outputs[0].amount.0.saturating_sub(1).max(1);
                }
                Some(tx)
            }
            1 => {
                let mut tx = self.spend(state, epoch, false)?;
                let wrong = self.keys[self.rng.gen_range(0..USERS)].clone();
                let msg = signing_message(&tx.txid(), 0);
                tx.inputs_mut().expect("spend has inputs")[0].witness = vec![wrong.sign(&[msg, [1; 32]].concat()).0.to_vec()];
                Some(tx)
            }
            _ => {
                let mut tx = self.move_to_utxo(state, epoch);
                let u = self.user_of(&tx.account_signer().expect("move has owner")).expect("generated key");
                tx.nonce += 1_000;
                tx.sign_account(&self.keys[u]);
                Some(tx)
            }
        }
    }

    /// Next batch against `state`, to be applied at `state.epoch + step`.
    pub fn next_batch(&mut self, state: &LedgerState, txs: usize) -> Batch {
        self.reserved.clear();
        self.nonces.clear();
        self.epoch_step = self.rng.gen_range(0..=1);
        let epoch = state.epoch.0 + self.epoch_step;
        let mut out: Vec<Transaction> = Vec::with_capacity(txs);
        if state.height == 0 {
            out.push(self.deploy(state));
            out.push(self.deploy(state));
        }
        let mut attempts = 0;
        while out.len() < txs && attempts < txs * 4 {
            attempts += 1;
            let tx = match self.rng.gen_range(0..100) {
                0..=34 => self.spend(state, epoch, false),
                35..=44 => self.spend(state, epoch, true),
                45..=54 => self.move_to_account(state),
                55..=59 => Some(self.move_to_utxo(state, epoch)),
                60..=61 => Some(self.deploy(state)),
                62..=91 => self.call(state),
                _ => self.faulty(state, &out, epoch),
            };
            out.extend(tx);
        }
        Batch { number: state.height + 1, epoch: Epoch(epoch), txs: out }
    }
}

/// A generated and applied workload.
pub struct Run {
    pub cfg: SystemConfig,
    pub genesis: BatchHeader,
    pub entries: Vec<LogEntry>,
    pub state: LedgerState,
}

/// Generates and applies a workload, calling `after` with the state after
/// each batch.
pub fn run(seed: u64, params: &Params, workers: usize, mut after: impl FnMut(&LedgerState, &LogEntry)) -> Run {
    let cfg = genesis(seed, params);
    let mut state = LedgerState::genesis(cfg.clone());
    state.workers = workers;
    let genesis = state.genesis_header();
    let mut gen = Generator::new(seed);
    let mut entries = Vec::with_capacity(params.batches as usize);
    for _ in 0..params.batches {
        let batch = gen.next_batch(&state, params.txs_per_batch);
        let (receipts, header) = apply_batch(&mut state, &batch).expect("generator numbers batches in order");
        let entry = LogEntry { batch, header, receipts };
        after(&state, &entry);
        entries.push(entry);
    }
    Run { cfg, genesis, entries, state }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tierledger_core::status;

    #[test]
    fn workload_is_mixed_and_mostly_valid() {
        let run = run(7, &Params::default(), 1, |s, _| assert!(s.conserved()));
        let receipts: Vec<_> = run.entries.iter().flat_map(|e| &e.receipts).collect();
        assert!(receipts.len() >= 900, "{}", receipts.len());
        let ok = receipts.iter().filter(|r| r.status == status::OK).count();
        assert!(ok * 2 > receipts.len(), "{ok} of {}", receipts.len());
        let levels: BTreeSet<_> = receipts.iter().map(|r| r.level).collect();
        assert_eq!(levels.len(), 4, "{levels:?}");
        let kinds: BTreeSet<_> = run
            .entries
            .iter()
            .flat_map(|e| &e.batch.txs)
            .map(|t| match &t.kind {
                TxKind::UtxoSpend { .. } => 0,
                TxKind::Deploy { .. } => 1,
                TxKind::Call { .. } => 2,
                TxKind::Move(MoveDirection::ToAccount { .. }) => 3,
                TxKind::Move(MoveDirection::ToUtxo { .. }) => 4,
            })
            .collect();
        assert_eq!(kinds.len(), 5);
    }

    #[test]
    fn same_seed_same_log() {
        let p = Params { batches: 5, ..Params::default() };
        let a = run(3, &p, 1, |_, _| {});
        let b = run(3, &p, 1, |_, _| {});
        assert_eq!(a.entries, b.entries);
    }
}
