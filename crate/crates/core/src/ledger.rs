//! Ledger state, the batch pipeline, hash-chained receipts and headers, and
//! deterministic replay.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{self, verify};
use crate::model::{
    classify_level_with, signing_message, Address, Amount, Epoch, Level, MoveDirection, Outpoint, Output, Transaction,
    TxId, TxKind,
};
use crate::permission::authorize_tx;
use crate::rules::{apply_expiry, check_fee, subsidy, SystemConfig};
use crate::status;
use crate::utxo::{
    apply_utxo_tx, check_created_outputs, validate_utxo_tx, validate_utxo_tx_with, verify_inputs, Maturity,
    PendingPool, UtxoRejection, UtxoSet,
};
use crate::vm::{self, AccountState, CallResult, VmEnv};

/// A 32-byte hash, printed and serialized as lowercase hex.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Hash32(pub [u8; 32]);

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        crate::fmt_hex(f, &self.0)
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        crate::fmt_hex(f, &self.0)
    }
}

#[cfg(feature = "serde")]
crate::serde_hex::hex_newtype_serde!(Hash32, 32);

const COINBASE_TAG: &[u8] = b"tierledger/coinbase";

/// Outpoint of the coinbase output minted by batch `number`.
pub fn coinbase_outpoint(number: u64) -> Outpoint {
    Outpoint::new(TxId(crypto::sha256_concat(&[COINBASE_TAG, &number.to_le_bytes()])), 0)
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Batch {
    pub number: u64,
    pub epoch: Epoch,
    pub txs: Vec<Transaction>,
}

impl Batch {
    /// Full encoding, witnesses included.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.number).u64(self.epoch.0);
        w.list(&self.txs, |w, tx| tx.encode_full(w));
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let number = r.u64()?;
        let epoch = Epoch(r.u64()?);
        // smallest encodable transaction is well over 8 bytes
        let txs = r.list(8, Transaction::decode_full_from)?;
        r.finish()?;
        Ok(Batch { number, epoch, txs })
    }

    pub fn hash(&self) -> Hash32 {
        Hash32(crypto::sha256(&self.to_bytes()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Receipt {
    pub txid: TxId,
    pub status: u16,
    pub gas_used: u64,
    pub level: Level,
    /// State digest right after this transaction.
    pub digest: Hash32,
}

pub const RECEIPT_LEN: usize = 32 + 2 + 8 + 1 + 32;

impl Receipt {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.txid.0).u16(self.status).u64(self.gas_used).u8(self.level.code()).raw(&self.digest.0);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let txid = TxId(r.array()?);
        let status = r.u16()?;
        let gas_used = r.u64()?;
        let tag = r.u8()?;
        let level = Level::from_code(tag).ok_or(DecodeError::BadTag { what: "level", tag })?;
        let digest = Hash32(r.array()?);
        r.finish()?;
        Ok(Receipt { txid, status, gas_used, level, digest })
    }

    pub fn hash(&self) -> Hash32 {
        Hash32(crypto::sha256(&self.to_bytes()))
    }
}

/// SHA-256 over the concatenated receipt hashes.
pub fn receipts_hash(receipts: &[Receipt]) -> Hash32 {
    let mut buf = Vec::with_capacity(32 * receipts.len());
    for r in receipts {
        buf.extend_from_slice(&r.hash().0);
    }
    Hash32(crypto::sha256(&buf))
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BatchHeader {
    pub number: u64,
    pub epoch: Epoch,
    pub prev_hash: Hash32,
    pub batch_hash: Hash32,
    pub receipts_hash: Hash32,
    pub state_digest: Hash32,
    pub genesis_hash: Hash32,
}

impl BatchHeader {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.number)
            .u64(self.epoch.0)
            .raw(&self.prev_hash.0)
            .raw(&self.batch_hash.0)
            .raw(&self.receipts_hash.0)
            .raw(&self.state_digest.0)
            .raw(&self.genesis_hash.0);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let h = BatchHeader {
            number: r.u64()?,
            epoch: Epoch(r.u64()?),
            prev_hash: Hash32(r.array()?),
            batch_hash: Hash32(r.array()?),
            receipts_hash: Hash32(r.array()?),
            state_digest: Hash32(r.array()?),
            genesis_hash: Hash32(r.array()?),
        };
        r.finish()?;
        Ok(h)
    }

    pub fn hash(&self) -> Hash32 {
        Hash32(crypto::sha256(&self.to_bytes()))
    }
}

/// Value issued and destroyed since genesis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Supply {
    pub issued: Amount,
    pub expired: Amount,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchError {
    /// Batch number is not the successor of the last applied batch.
    BadNumber { expected: u64, found: u64 },
    /// Batch epoch is earlier than the ledger epoch.
    NonMonotoneEpoch { current: Epoch, found: Epoch },
}

impl fmt::Display for BatchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BatchError::BadNumber { expected, found } => write!(f, "batch number {found}, expected {expected}"),
            BatchError::NonMonotoneEpoch { current, found } => {
                write!(f, "batch epoch {found} precedes ledger epoch {current}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerState {
    pub cfg: SystemConfig,
    pub utxos: UtxoSet,
    pub accounts: AccountState,
    pub pending: PendingPool,
    pub supply: Supply,
    pub epoch: Epoch,
    pub height: u64,
    pub last_header: Hash32,
    pub genesis_hash: Hash32,
    /// Worker threads for declared-mode call segments. Does not affect results.
    pub workers: usize,
}

impl LedgerState {
    /// Builds the genesis state. The config must already be valid.
    pub fn genesis(cfg: SystemConfig) -> Self {
        let genesis_hash = Hash32(cfg.hash());
        let mut utxos = UtxoSet::new();
        for (i, o) in cfg.genesis_outputs.iter().enumerate() {
            utxos.insert(Outpoint::new(TxId(genesis_hash.0), i as u32), o.clone());
        }
        let mut accounts = AccountState::new();
        for (a, v) in &cfg.genesis_balances {
            accounts.credit(*a, *v).expect("validated genesis supply");
        }
        let issued = utxos.total().checked_add(accounts.total().unwrap_or_default()).expect("validated genesis supply");
        let mut state = LedgerState {
            cfg,
            utxos,
            accounts,
            pending: PendingPool::new(),
            supply: Supply { issued, expired: Amount::ZERO },
            epoch: Epoch(0),
            height: 0,
            last_header: Hash32::default(),
            genesis_hash,
            workers: 1,
        };
        state.last_header = state.genesis_header().hash();
        state
    }

    /// Header number 0, committing to the genesis state.
    pub fn genesis_header(&self) -> BatchHeader {
        BatchHeader {
            number: 0,
            epoch: Epoch(0),
            prev_hash: Hash32::default(),
            batch_hash: Hash32::default(),
            receipts_hash: receipts_hash(&[]),
            state_digest: self.digest(),
            genesis_hash: self.genesis_hash,
        }
    }

    pub fn digest(&self) -> Hash32 {
        state_digest(&self.utxos, &self.accounts, &self.supply, self.epoch)
    }

    /// `issued = UTXO value + account value + expired value`.
    pub fn conserved(&self) -> bool {
        let held = self
            .utxos
            .recompute_total()
            .zip(self.accounts.total())
            .and_then(|(u, a)| u.checked_add(a))
            .and_then(|v| v.checked_add(self.supply.expired));
        held == Some(self.supply.issued)
    }

    fn operator(&self) -> Address {
        self.cfg.operator_address()
    }

    fn receipt(&self, txid: TxId, status: u16, gas_used: u64, level: Level) -> Receipt {
        Receipt { txid, status, gas_used, level, digest: self.digest() }
    }

    /// Credits a UTXO-side fee to the operator account.
    fn collect_fee(&mut self, fee: Amount) {
        if fee != Amount::ZERO {
            let op = self.operator();
            self.accounts.credit(op, fee).expect("fee credit within total supply");
        }
    }
}

/// SHA-256 over the UTXO set, account state, supply counters and epoch, each
/// in canonical order. The pending pool is not part of the digest.
pub fn state_digest(utxos: &UtxoSet, accounts: &AccountState, supply: &Supply, epoch: Epoch) -> Hash32 {
    let mut w = Writer::new();
    w.count(utxos.len());
    for (op, out) in utxos.iter() {
        w.raw(&op.to_bytes());
        out.encode(&mut w);
    }
    w.count(accounts.balances.len());
    for (a, v) in &accounts.balances {
        w.raw(&a.0).u64(v.0);
    }
    w.count(accounts.contracts.len());
    for (a, c) in &accounts.contracts {
        w.raw(&a.0).raw(&c.code_hash()).u64(c.balance.0);
        c.footprint.encode(&mut w);
        w.count(c.storage.len());
        for (k, v) in &c.storage {
            w.u64(*k).u64(*v);
        }
    }
    w.count(accounts.nonces.len());
    for (a, n) in &accounts.nonces {
        w.raw(&a.0).u64(*n);
    }
    w.u64(supply.issued.0).u64(supply.expired.0).u64(epoch.0);
    Hash32(crypto::sha256(&w.into_bytes()))
}

/// Applies one batch and returns its receipts and header.
pub fn apply_batch(state: &mut LedgerState, batch: &Batch) -> Result<(Vec<Receipt>, BatchHeader), BatchError> {
    let expected = state.height + 1;
    if batch.number != expected {
        return Err(BatchError::BadNumber { expected, found: batch.number });
    }
    if batch.epoch < state.epoch {
        return Err(BatchError::NonMonotoneEpoch { current: state.epoch, found: batch.epoch });
    }
    state.epoch = batch.epoch;
    let expired = apply_expiry(&mut state.utxos, state.epoch, &state.cfg);
    state.supply.expired = state.supply.expired.checked_add(expired).expect("expired value within supply");

    let minted = subsidy(state.epoch, &state.cfg);
    if minted != Amount::ZERO {
        if let Some(issued) = state.supply.issued.checked_add(minted) {
            state.supply.issued = issued;
            let out = Output { amount: minted, lock: crate::model::Lock::PubKey(state.cfg.operator_key), expiry: None };
            state.utxos.insert(coinbase_outpoint(batch.number), out);
        }
    }

    let mut receipts = Vec::with_capacity(batch.txs.len());
    let mut spent = BTreeSet::new();
    for entry in state.pending.drain_matured(state.epoch) {
        let level = classify(state, &entry.tx);
        let code = match validate_utxo_tx(&entry.tx, &state.utxos, &spent, state.epoch, &state.cfg) {
            Ok(fee) => {
                apply_spend(state, &entry.tx, &entry.txid, fee, &mut spent);
                status::OK
            }
            Err(e) => status::from_utxo(&e),
        };
        receipts.push(state.receipt(entry.txid, code, 0, level));
    }

    let mut i = 0;
    while i < batch.txs.len() {
        if matches!(batch.txs[i].kind, TxKind::Call { .. }) {
            let end = batch.txs[i..]
                .iter()
                .position(|tx| !matches!(tx.kind, TxKind::Call { .. }))
                .map_or(batch.txs.len(), |n| i + n);
            apply_calls(state, &batch.txs[i..end], &mut receipts);
            i = end;
        } else {
            let r = apply_one(state, &batch.txs[i], &mut spent);
            receipts.push(r);
            i += 1;
        }
    }

    let header = BatchHeader {
        number: batch.number,
        epoch: batch.epoch,
        prev_hash: state.last_header,
        batch_hash: batch.hash(),
        receipts_hash: receipts_hash(&receipts),
        state_digest: state.digest(),
        genesis_hash: state.genesis_hash,
    };
    state.height = batch.number;
    state.last_header = header.hash();
    Ok((receipts, header))
}

fn classify(state: &LedgerState, tx: &Transaction) -> Level {
    classify_level_with(tx, |op| state.utxos.get(op).is_some_and(|o| o.lock.is_script()))
}

/// Checks shared by every transaction kind before routing. Returns the
/// rejection status, if any.
fn precheck(state: &LedgerState, tx: &Transaction, txid: &TxId, level: Level) -> Option<u16> {
    if let Err(e) = tx.check_structure() {
        return Some(status::from_structure(&e));
    }
    if level > state.cfg.max_level {
        return Some(status::LEVEL_EXCEEDS_CONFIG);
    }
    if let Err(e) = authorize_tx(tx, &state.cfg, state.epoch) {
        return Some(status::from_permission(&e));
    }
    if !matches!(tx.kind, TxKind::UtxoSpend { .. }) {
        if let Err(e) = check_fee(tx, Amount::ZERO, &state.cfg) {
            return Some(status::from_fee(&e));
        }
    }
    if let Some(signer) = tx.account_signer() {
        let ok = tx
            .signature
            .is_some_and(|sig| verify(&signer.0, &signing_message(txid, 0), &sig.0));
        if !ok {
            return Some(status::BAD_ACCOUNT_SIGNATURE);
        }
    }
    None
}

fn apply_spend(state: &mut LedgerState, tx: &Transaction, txid: &TxId, fee: Amount, spent: &mut BTreeSet<Outpoint>) {
    spent.extend(tx.inputs().iter().map(|i| i.outpoint));
    apply_utxo_tx(&mut state.utxos, tx, txid);
    state.collect_fee(fee);
}

fn apply_one(state: &mut LedgerState, tx: &Transaction, spent: &mut BTreeSet<Outpoint>) -> Receipt {
    let txid = tx.txid();
    let level = classify(state, tx);
    if let Some(code) = precheck(state, tx, &txid, level) {
        return state.receipt(txid, code, 0, level);
    }
    let (code, gas) = match &tx.kind {
        TxKind::UtxoSpend { .. } => (apply_utxo_spend(state, tx, &txid, spent), 0),
        TxKind::Move(dir) => (apply_move(state, tx, &txid, dir, spent), 0),
        TxKind::Deploy { .. } => match vm::deploy(&state.accounts, tx, &txid) {
            Ok((effects, outcome)) => {
                let op = state.operator();
                effects.apply(&mut state.accounts, op).expect("fee covered by pre-check");
                (status::from_exec(&outcome.status), outcome.gas_used)
            }
            Err(e) => (status::from_rejection(&e), 0),
        },
        TxKind::Call { .. } => unreachable!("calls are applied in runs"),
    };
    state.receipt(txid, code, gas, level)
}

fn apply_utxo_spend(state: &mut LedgerState, tx: &Transaction, txid: &TxId, spent: &mut BTreeSet<Outpoint>) -> u16 {
    match validate_utxo_tx(tx, &state.utxos, spent, state.epoch, &state.cfg) {
        Ok(fee) => {
            apply_spend(state, tx, txid, fee, spent);
            status::OK
        }
        Err(UtxoRejection::OutsideValidityWindow)
            if tx.validity.is_some_and(|v| v.is_premature(state.epoch)) =>
        {
            // premature but otherwise valid transactions wait in the pool
            match validate_utxo_tx_with(tx, &state.utxos, spent, state.epoch, &state.cfg, Maturity::Ignore) {
                Ok(fee) => {
                    let outcome = state.pending.submit(tx.clone(), fee);
                    status::from_pending(&outcome)
                }
                Err(e) => status::from_utxo(&e),
            }
        }
        Err(e) => status::from_utxo(&e),
    }
}

fn apply_move(
    state: &mut LedgerState,
    tx: &Transaction,
    txid: &TxId,
    dir: &MoveDirection,
    spent: &mut BTreeSet<Outpoint>,
) -> u16 {
    if let Some(v) = &tx.validity {
        if !v.contains(state.epoch) {
            return status::OUTSIDE_VALIDITY_WINDOW;
        }
    }
    match dir {
        MoveDirection::ToAccount { account, change, .. } => {
            let total_in = match verify_inputs(tx, txid, &state.utxos, spent, state.epoch, &state.cfg) {
                Ok(v) => v,
                Err(e) => return status::from_utxo(&e),
            };
            if let Err(e) = check_created_outputs(change, &state.cfg) {
                return status::from_utxo(&e);
            }
            let Some(kept) = Amount::checked_sum(change.iter().map(|o| o.amount)) else {
                return status::VALUE_OVERFLOW;
            };
            let Some(moved) = total_in.checked_sub(kept) else {
                return status::INSUFFICIENT_FEE;
            };
            spent.extend(tx.inputs().iter().map(|i| i.outpoint));
            apply_utxo_tx(&mut state.utxos, tx, txid);
            state.accounts.credit(*account, moved).expect("credit within total supply");
            status::OK
        }
        MoveDirection::ToUtxo { owner, outputs } => {
            let who = Address::from_public_key(owner);
            let expected = state.accounts.nonce(&who);
            if tx.nonce != expected {
                return status::BAD_NONCE;
            }
            if let Err(e) = check_created_outputs(outputs, &state.cfg) {
                return status::from_utxo(&e);
            }
            let Some(total) = Amount::checked_sum(outputs.iter().map(|o| o.amount)) else {
                return status::VALUE_OVERFLOW;
            };
            if state.accounts.debit(who, total).is_none() {
                return status::INSUFFICIENT_BALANCE;
            }
            state.accounts.nonces.insert(who, expected + 1);
            apply_utxo_tx(&mut state.utxos, tx, txid);
            status::OK
        }
    }
}

/// Applies a run of consecutive calls through the scheduler. Calls failing
/// the ledger pre-checks never reach it and leave state untouched.
fn apply_calls(state: &mut LedgerState, txs: &[Transaction], receipts: &mut Vec<Receipt>) {
    let mut slots: Vec<(TxId, Level, Option<u16>)> = Vec::with_capacity(txs.len());
    let mut eligible = Vec::new();
    for tx in txs {
        let txid = tx.txid();
        let level = classify(state, tx);
        let rejected = precheck(state, tx, &txid, level);
        if rejected.is_none() {
            eligible.push(tx.clone());
        }
        slots.push((txid, level, rejected));
    }
    let mut last = state.digest();
    let env = VmEnv { epoch: state.epoch, mode: state.cfg.access_mode };
    let operator = state.operator();
    let (utxos, supply, epoch) = (&state.utxos, state.supply, state.epoch);
    let mut done: Vec<(u16, u64, Hash32)> = Vec::with_capacity(eligible.len());
    vm::schedule_batch(&mut state.accounts, &eligible, &env, operator, state.workers, |_, accounts, result: &CallResult| {
        let (code, gas) = match result {
            Ok(outcome) => (status::from_exec(&outcome.status), outcome.gas_used),
            Err(e) => (status::from_rejection(e), 0),
        };
        done.push((code, gas, state_digest(utxos, accounts, &supply, epoch)));
    });
    let mut executed = done.into_iter();
    for (txid, level, rejected) in slots {
        let r = match rejected {
            Some(code) => Receipt { txid, status: code, gas_used: 0, level, digest: last },
            None => {
                let (code, gas, digest) = executed.next().expect("one result per eligible call");
                last = digest;
                Receipt { txid, status: code, gas_used: gas, level, digest }
            }
        };
        receipts.push(r);
    }
}

/// First disagreement found while replaying a log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Divergence {
    pub batch: u64,
    pub field: &'static str,
    pub expected: String,
    pub found: String,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "divergence at batch {} in {}: log has {}, replay computed {}",
            self.batch, self.field, self.found, self.expected
        )
    }
}

/// A logged batch with the header and receipts recorded for it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogEntry {
    pub batch: Batch,
    pub header: BatchHeader,
    pub receipts: Vec<Receipt>,
}

fn diverge(batch: u64, field: &'static str, expected: impl fmt::Display, found: impl fmt::Display) -> Divergence {
    use alloc::string::ToString;
    Divergence { batch, field, expected: expected.to_string(), found: found.to_string() }
}

/// Re-executes a log from genesis, checking every recorded header and
/// receipt. Returns the final state, or the first divergence.
pub fn replay_verify(
    cfg: &SystemConfig,
    genesis_header: &BatchHeader,
    log: &[LogEntry],
    workers: usize,
) -> Result<LedgerState, Divergence> {
    let mut state = LedgerState::genesis(cfg.clone());
    state.workers = workers;
    let g = state.genesis_header();
    check_header(0, &g, genesis_header)?;
    for (i, entry) in log.iter().enumerate() {
        let pos = i as u64 + 1;
        let (receipts, header) = apply_batch(&mut state, &entry.batch).map_err(|e| diverge(pos, "batch", "applicable batch", e))?;
        if receipts_hash(&entry.receipts) != entry.header.receipts_hash {
            return Err(diverge(pos, "receipts_hash", entry.header.receipts_hash, receipts_hash(&entry.receipts)));
        }
        check_header(pos, &header, &entry.header)?;
        if receipts.len() != entry.receipts.len() {
            return Err(diverge(pos, "receipts", receipts.len(), entry.receipts.len()));
        }
        for (mine, theirs) in receipts.iter().zip(&entry.receipts) {
            if mine != theirs {
                return Err(diverge(pos, "receipts", mine.hash(), theirs.hash()));
            }
        }
    }
    Ok(state)
}

fn check_header(pos: u64, mine: &BatchHeader, theirs: &BatchHeader) -> Result<(), Divergence> {
    let fields: [(&'static str, Hash32, Hash32); 5] = [
        ("prev_hash", mine.prev_hash, theirs.prev_hash),
        ("batch_hash", mine.batch_hash, theirs.batch_hash),
        ("receipts_hash", mine.receipts_hash, theirs.receipts_hash),
        ("state_digest", mine.state_digest, theirs.state_digest),
        ("genesis_hash", mine.genesis_hash, theirs.genesis_hash),
    ];
    if mine.number != theirs.number {
        return Err(diverge(pos, "number", mine.number, theirs.number));
    }
    if mine.epoch != theirs.epoch {
        return Err(diverge(pos, "epoch", mine.epoch, theirs.epoch));
    }
    for (name, a, b) in fields {
        if a != b {
            return Err(diverge(pos, name, a, b));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, KeyPair};
    use crate::model::{AccessDecl, Input, Lock, Validity};
    use crate::rules::AccessMode;
    use crate::vm::assemble;
    use alloc::vec;

    fn key(i: u8) -> KeyPair {
        keygen(&[i; 32])
    }

    fn config() -> SystemConfig {
        let mut cfg = SystemConfig::new(key(0).public());
        cfg.genesis_outputs = vec![Output::new(100, Lock::PubKey(key(1).public()))];
        cfg.genesis_balances.insert(Address::from_public_key(&key(2).public()), Amount(500));
        cfg
    }

    fn genesis_coin(state: &LedgerState) -> Outpoint {
        Outpoint::new(TxId(state.genesis_hash.0), 0)
    }

    fn pay(from: &KeyPair, coin: Outpoint, outputs: Vec<Output>) -> Transaction {
        let mut tx = Transaction::new(TxKind::UtxoSpend { inputs: vec![Input::new(coin)], outputs });
        tx.sign_input(0, from);
        tx
    }

    fn batch(state: &LedgerState, epoch: u64, txs: Vec<Transaction>) -> Batch {
        Batch { number: state.height + 1, epoch: Epoch(epoch), txs }
    }

    fn step(state: &mut LedgerState, epoch: u64, txs: Vec<Transaction>) -> Result<(Vec<Receipt>, BatchHeader), BatchError> {
        let b = batch(state, epoch, txs);
        apply_batch(state, &b)
    }

    #[test]
    fn genesis_supply_and_header() {
        let state = LedgerState::genesis(config());
        assert_eq!(state.supply.issued, Amount(600));
        assert!(state.conserved());
        assert_eq!(state.genesis_header().number, 0);
        assert_eq!(state.last_header, state.genesis_header().hash());
    }

    #[test]
    fn coinbase_fee_and_receipts() {
        let mut state = LedgerState::genesis(config());
        let coin = genesis_coin(&state);
        let tx = pay(&key(1), coin, vec![Output::new(97, Lock::PubKey(key(3).public()))]);
        let b = batch(&state, 1, vec![tx.clone()]);
        let (receipts, header) = apply_batch(&mut state, &b).unwrap();
        assert_eq!(receipts.len(), 1);
        assert_eq!(receipts[0].status, status::OK);
        assert_eq!(receipts[0].txid, tx.txid());
        assert_eq!(receipts[0].digest, header.state_digest);
        assert_eq!(state.supply.issued, Amount(650));
        assert!(state.utxos.contains(&coinbase_outpoint(1)));
        assert_eq!(state.accounts.balance(&state.cfg.operator_address()), Amount(3));
        assert!(state.conserved());
    }

    #[test]
    fn double_spend_in_batch() {
        let mut state = LedgerState::genesis(config());
        let coin = genesis_coin(&state);
        let a = pay(&key(1), coin, vec![Output::new(100, Lock::PubKey(key(3).public()))]);
        let b = pay(&key(1), coin, vec![Output::new(100, Lock::PubKey(key(4).public()))]);
        let (receipts, _) = step(&mut state, 0, vec![a, b]).unwrap();
        assert_eq!(receipts[1].status, status::DOUBLE_SPEND_IN_BATCH);
    }

    #[test]
    fn level_gating_leaves_state_unchanged() {
        let mut cfg = config();
        cfg.max_level = Level::L1;
        cfg.initial_subsidy = Amount::ZERO;
        let mut state = LedgerState::genesis(cfg);
        let coin = genesis_coin(&state);
        let mut tx = Transaction::new(TxKind::UtxoSpend {
            inputs: vec![Input::new(coin)],
            outputs: vec![Output::new(100, Lock::PubKey(key(3).public()))],
        });
        tx.validity = Some(Validity { not_before: None, not_after: Some(Epoch(9)) });
        tx.sign_input(0, &key(1));
        let before = state.digest();
        let (receipts, _) = step(&mut state, 0, vec![tx]).unwrap();
        assert_eq!(receipts[0].status, status::LEVEL_EXCEEDS_CONFIG);
        assert_eq!(receipts[0].level, Level::L1_5);
        assert_eq!(state.digest(), before);
    }

    #[test]
    fn premature_payment_waits_then_drains() {
        let mut cfg = config();
        cfg.initial_subsidy = Amount::ZERO;
        let mut state = LedgerState::genesis(cfg);
        let coin = genesis_coin(&state);
        let mut tx = Transaction::new(TxKind::UtxoSpend {
            inputs: vec![Input::new(coin)],
            outputs: vec![Output::new(100, Lock::PubKey(key(3).public()))],
        });
        tx.validity = Some(Validity { not_before: Some(Epoch(2)), not_after: None });
        tx.sign_input(0, &key(1));
        let (r, _) = step(&mut state, 0, vec![tx.clone()]).unwrap();
        assert_eq!(r[0].status, status::PENDING);
        let (r, _) = step(&mut state, 1, vec![]).unwrap();
        assert!(r.is_empty());
        let (r, _) = step(&mut state, 2, vec![]).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].txid, r[0].status), (tx.txid(), status::OK));
    }

    #[test]
    fn batch_container_checks() {
        let mut state = LedgerState::genesis(config());
        step(&mut state, 5, vec![]).unwrap();
        assert_eq!(
            step(&mut state, 4, vec![]),
            Err(BatchError::NonMonotoneEpoch { current: Epoch(5), found: Epoch(4) })
        );
        let skip = Batch { number: 7, epoch: Epoch(5), txs: vec![] };
        assert_eq!(apply_batch(&mut state, &skip), Err(BatchError::BadNumber { expected: 2, found: 7 }));
    }

    fn deploy_and_call(mode: AccessMode) -> (LedgerState, Vec<Receipt>) {
        let mut cfg = config();
        cfg.access_mode = mode;
        let mut state = LedgerState::genesis(cfg);
        let k = key(2);
        let mut d = Transaction::new(TxKind::Deploy {
            code: assemble("PUSHI 0 ARG SSTORE", |_| None).unwrap(),
            endowment: Amount(5),
            payer: k.public(),
            gas_limit: 50,
            gas_price: 1,
            footprint: AccessDecl::default(),
        });
        d.sign_account(&k);
        let contract = Address(d.txid().0);
        step(&mut state, 0, vec![d]).unwrap();
        let mut calls = Vec::new();
        for (nonce, arg) in [(1, 7), (2, 8), (9, 9)] {
            let mut c = Transaction::new(TxKind::Call {
                contract,
                arg,
                attached: Amount::ZERO,
                caller: k.public(),
                gas_limit: 30,
                gas_price: 1,
                addresses: vec![],
                access: Some(AccessDecl {
                    storage_written: [(contract, 0)].into_iter().collect(),
                    ..Default::default()
                }),
            });
            c.nonce = nonce;
            c.sign_account(&k);
            calls.push(c);
        }
        // an unsigned call between signed ones
        calls.insert(1, Transaction { signature: None, ..calls[0].clone() });
        let (receipts, _) = step(&mut state, 0, calls).unwrap();
        (state, receipts)
    }

    #[test]
    fn call_run_receipts_in_order() {
        let (state, receipts) = deploy_and_call(AccessMode::Dynamic);
        let codes: Vec<u16> = receipts.iter().map(|r| r.status).collect();
        assert_eq!(codes, vec![status::OK, status::BAD_ACCOUNT_SIGNATURE, status::OK, status::BAD_NONCE]);
        assert_eq!(receipts[1].digest, receipts[0].digest);
        assert_eq!(receipts[3].digest, state.digest());
        assert!(state.conserved());
    }

    #[test]
    fn declared_and_dynamic_agree() {
        let (a, ra) = deploy_and_call(AccessMode::Dynamic);
        let (b, rb) = deploy_and_call(AccessMode::Declared);
        // configs differ in access mode, so compare state rather than digests
        assert_eq!(a.accounts, b.accounts);
        assert_eq!(ra.len(), rb.len());
    }

    #[test]
    fn encodings_round_trip() {
        let mut state = LedgerState::genesis(config());
        let coin = genesis_coin(&state);
        let tx = pay(&key(1), coin, vec![Output::new(99, Lock::PubKey(key(3).public()))]);
        let b = batch(&state, 1, vec![tx]);
        assert_eq!(Batch::from_bytes(&b.to_bytes()).unwrap(), b);
        let (receipts, header) = apply_batch(&mut state, &b).unwrap();
        assert_eq!(Receipt::from_bytes(&receipts[0].to_bytes()).unwrap(), receipts[0]);
        assert_eq!(receipts[0].to_bytes().len(), RECEIPT_LEN);
        assert_eq!(BatchHeader::from_bytes(&header.to_bytes()).unwrap(), header);
    }

    fn build_log(n: u64) -> (SystemConfig, BatchHeader, Vec<LogEntry>) {
        let cfg = config();
        let mut state = LedgerState::genesis(cfg.clone());
        let genesis = state.genesis_header();
        let mut log = Vec::new();
        let mut coin = genesis_coin(&state);
        for e in 1..=n {
            let tx = pay(&key(1), coin, vec![Output::new(100 - e, Lock::PubKey(key(1).public()))]);
            coin = Outpoint::new(tx.txid(), 0);
            let b = batch(&state, e, vec![tx]);
            let (receipts, header) = apply_batch(&mut state, &b).unwrap();
            log.push(LogEntry { batch: b, header, receipts });
        }
        (cfg, genesis, log)
    }

    #[test]
    fn replay_accepts_honest_log() {
        let (cfg, genesis, log) = build_log(5);
        let state = replay_verify(&cfg, &genesis, &log, 1).unwrap();
        assert_eq!(state.last_header, log[4].header.hash());
    }

    #[test]
    fn replay_pinpoints_tampering() {
        let (cfg, genesis, log) = build_log(5);
        let mut bad = log.clone();
        bad[2].receipts[0].gas_used = 1;
        let d = replay_verify(&cfg, &genesis, &bad, 1).unwrap_err();
        assert_eq!((d.batch, d.field), (3, "receipts_hash"));

        let mut bad = log.clone();
        bad[3].batch.txs[0].inputs_mut().unwrap()[0].witness[0][5] ^= 1;
        let d = replay_verify(&cfg, &genesis, &bad, 1).unwrap_err();
        assert_eq!(d.batch, 4);

        let mut bad = log;
        bad[1].header.state_digest.0[0] ^= 1;
        let d = replay_verify(&cfg, &genesis, &bad, 1).unwrap_err();
        assert_eq!((d.batch, d.field), (2, "state_digest"));
    }

    #[test]
    fn digest_tracks_storage() {
        let mut state = LedgerState::genesis(config());
        let c = Address([7; 32]);
        state.accounts.contracts.insert(
            c,
            vm::ContractAccount {
                code: vec![0x61],
                storage: Default::default(),
                balance: Amount::ZERO,
                footprint: AccessDecl::default(),
            },
        );
        let base = state.digest();
        state.accounts.contracts.get_mut(&c).unwrap().storage.insert(1, 2);
        assert_ne!(state.digest(), base);
        state.accounts.contracts.get_mut(&c).unwrap().storage.remove(&1);
        assert_eq!(state.digest(), base);
    }
}
