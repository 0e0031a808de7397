//! UTXO set, validation and application of output-spending transactions,
//! and the pool of time-locked transactions waiting to mature.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use crate::crypto::{self};
use crate::model::{signing_message, Amount, Epoch, Input, Lock, Outpoint, Output, Transaction, TxId, TxKind};
use crate::rules::{self, SystemConfig};
use crate::script::{self, Outcome, ScriptContext, ScriptFailure};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UtxoSet {
    entries: BTreeMap<Outpoint, Output>,
    total: Amount,
}

impl UtxoSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, op: &Outpoint) -> Option<&Output> {
        self.entries.get(op)
    }

    pub fn contains(&self, op: &Outpoint) -> bool {
        self.entries.contains_key(op)
    }

    /// Inserts an output, replacing (and un-counting) any previous one.
    pub fn insert(&mut self, op: Outpoint, out: Output) {
        let amount = out.amount;
        if let Some(old) = self.entries.insert(op, out) {
            self.total = Amount(self.total.0 - old.amount.0);
        }
        self.total = self.total.checked_add(amount).expect("UTXO total overflow");
    }

    pub fn remove(&mut self, op: &Outpoint) -> Option<Output> {
        let out = self.entries.remove(op)?;
        self.total = Amount(self.total.0 - out.amount.0);
        Some(out)
    }

    /// Removes every entry matching `pred`; returns the removed value.
    pub fn remove_where(&mut self, mut pred: impl FnMut(&Outpoint, &Output) -> bool) -> Amount {
        let mut removed = 0u64;
        self.entries.retain(|op, out| {
            let drop = pred(op, out);
            if drop {
                removed += out.amount.0;
            }
            !drop
        });
        self.total = Amount(self.total.0 - removed);
        Amount(removed)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in serialized-outpoint order.
    pub fn iter(&self) -> impl Iterator<Item = (&Outpoint, &Output)> {
        self.entries.iter()
    }

    pub fn total(&self) -> Amount {
        self.total
    }

    /// Total recomputed from the entries.
    pub fn recompute_total(&self) -> Option<Amount> {
        Amount::checked_sum(self.entries.values().map(|o| o.amount))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UtxoRejection {
    MissingInput(usize),
    DoubleSpendInBatch(usize),
    Expired(usize),
    OutsideValidityWindow,
    InsufficientFee,
    LockFailed { input: usize, script: Option<ScriptFailure> },
    AllowListViolation(usize),
    /// Output carries an expiry while the expiry rule is off.
    ExpiryDisabled,
    ValueOverflow,
}

impl fmt::Display for UtxoRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Whether the lower bound of the validity window is enforced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Maturity {
    Enforce,
    /// Used for pending-pool admission: everything except `not_before`.
    Ignore,
}

/// Checks that every input exists, is unexpired, and satisfies its lock.
/// Returns the total input value.
pub(crate) fn verify_inputs(
    tx: &Transaction,
    txid: &TxId,
    utxos: &UtxoSet,
    spent_in_batch: &BTreeSet<Outpoint>,
    epoch: Epoch,
    cfg: &SystemConfig,
) -> Result<Amount, UtxoRejection> {
    let inputs = tx.inputs();
    let mut spent = Vec::with_capacity(inputs.len());
    for (i, input) in inputs.iter().enumerate() {
        match utxos.get(&input.outpoint) {
            Some(out) => spent.push(out),
            None if spent_in_batch.contains(&input.outpoint) => return Err(UtxoRejection::DoubleSpendInBatch(i)),
            None => return Err(UtxoRejection::MissingInput(i)),
        }
    }
    for (i, out) in spent.iter().enumerate() {
        if out.expiry.is_some_and(|e| epoch >= e) {
            return Err(UtxoRejection::Expired(i));
        }
    }
    let total = Amount::checked_sum(spent.iter().map(|o| o.amount)).ok_or(UtxoRejection::ValueOverflow)?;
    let output_hashes: Vec<[u8; 32]> = tx.created_outputs().iter().map(|o| o.lock.address().0).collect();
    for (i, (input, out)) in inputs.iter().zip(&spent).enumerate() {
        check_lock(&out.lock, input, i, tx, txid, &output_hashes, cfg)?;
    }
    Ok(total)
}

fn check_lock(
    lock: &Lock,
    input: &Input,
    index: usize,
    tx: &Transaction,
    txid: &TxId,
    output_hashes: &[[u8; 32]],
    cfg: &SystemConfig,
) -> Result<(), UtxoRejection> {
    let msg = signing_message(txid, index as u32);
    let fail = |script| Err(UtxoRejection::LockFailed { input: index, script });
    match lock {
        Lock::PubKey(pk) => match input.witness.as_slice() {
            [sig] if crypto::verify(&pk.0, &msg, sig) => Ok(()),
            _ => fail(None),
        },
        Lock::MultiSig { m, keys } => {
            if crypto::check_multisig(*m as usize, keys, &input.witness, &msg) {
                Ok(())
            } else {
                fail(None)
            }
        }
        Lock::Script(code) => {
            let ctx = ScriptContext {
                message: msg,
                not_before: tx.validity.and_then(|v| v.not_before),
                output_hashes: output_hashes.to_vec(),
                covenants: cfg.covenants,
            };
            match script::execute(code, &input.witness, &ctx).outcome {
                Outcome::Success => Ok(()),
                Outcome::Failure(f) => fail(Some(f)),
            }
        }
    }
}

/// Output checks shared by every transaction that creates outputs: the
/// expiry field only when the rule is on, and the allow-list.
pub(crate) fn check_created_outputs(outputs: &[Output], cfg: &SystemConfig) -> Result<(), UtxoRejection> {
    if !cfg.expiry_enabled && outputs.iter().any(|o| o.expiry.is_some()) {
        return Err(UtxoRejection::ExpiryDisabled);
    }
    rules::check_allow_list(outputs, cfg).map_err(UtxoRejection::AllowListViolation)
}

/// Validates a `UtxoSpend` and returns its implicit fee.
pub fn validate_utxo_tx(
    tx: &Transaction,
    utxos: &UtxoSet,
    spent_in_batch: &BTreeSet<Outpoint>,
    epoch: Epoch,
    cfg: &SystemConfig,
) -> Result<Amount, UtxoRejection> {
    validate_utxo_tx_with(tx, utxos, spent_in_batch, epoch, cfg, Maturity::Enforce)
}

pub fn validate_utxo_tx_with(
    tx: &Transaction,
    utxos: &UtxoSet,
    spent_in_batch: &BTreeSet<Outpoint>,
    epoch: Epoch,
    cfg: &SystemConfig,
    maturity: Maturity,
) -> Result<Amount, UtxoRejection> {
    let TxKind::UtxoSpend { outputs, .. } = &tx.kind else {
        panic!("validate_utxo_tx called on a non-UtxoSpend transaction");
    };
    if let Some(v) = &tx.validity {
        let in_window = match maturity {
            Maturity::Enforce => v.contains(epoch),
            Maturity::Ignore => v.not_after.map_or(true, |na| epoch <= na),
        };
        if !in_window {
            return Err(UtxoRejection::OutsideValidityWindow);
        }
    }
    let txid = tx.txid();
    let total_in = verify_inputs(tx, &txid, utxos, spent_in_batch, epoch, cfg)?;
    let total_out = Amount::checked_sum(outputs.iter().map(|o| o.amount)).ok_or(UtxoRejection::ValueOverflow)?;
    let fee = total_in.checked_sub(total_out).ok_or(UtxoRejection::InsufficientFee)?;
    rules::check_fee(tx, fee, cfg).map_err(|_| UtxoRejection::InsufficientFee)?;
    check_created_outputs(outputs, cfg)?;
    Ok(fee)
}

/// Removes the spent inputs and inserts created outputs at `(txid, i)`.
/// The caller must have validated `tx`.
pub fn apply_utxo_tx(utxos: &mut UtxoSet, tx: &Transaction, txid: &TxId) {
    for input in tx.inputs() {
        utxos.remove(&input.outpoint);
    }
    for (i, out) in tx.created_outputs().iter().enumerate() {
        utxos.insert(Outpoint::new(*txid, i as u32), out.clone());
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PendingEntry {
    pub txid: TxId,
    pub tx: Transaction,
    pub fee: Amount,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PendingOutcome {
    Accepted,
    Replaced(Vec<TxId>),
    RejectedLowerFee,
}

/// Time-locked transactions waiting for their `not_before` epoch. At most one
/// entry spends any given outpoint.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PendingPool {
    entries: BTreeMap<TxId, PendingEntry>,
    by_outpoint: BTreeMap<Outpoint, TxId>,
}

impl PendingPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, txid: &TxId) -> Option<&PendingEntry> {
        self.entries.get(txid)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PendingEntry> {
        self.entries.values()
    }

    /// Admits `tx`, replacing every conflicting entry only when `fee` is
    /// strictly greater than each of theirs.
    pub fn submit(&mut self, tx: Transaction, fee: Amount) -> PendingOutcome {
        let txid = tx.txid();
        let conflicts: BTreeSet<TxId> = tx
            .inputs()
            .iter()
            .filter_map(|i| self.by_outpoint.get(&i.outpoint).copied())
            .collect();
        if conflicts.iter().any(|c| self.entries[c].fee >= fee) {
            return PendingOutcome::RejectedLowerFee;
        }
        for c in &conflicts {
            self.remove(c);
        }
        for input in tx.inputs() {
            self.by_outpoint.insert(input.outpoint, txid);
        }
        self.entries.insert(txid, PendingEntry { txid, tx, fee });
        if conflicts.is_empty() {
            PendingOutcome::Accepted
        } else {
            PendingOutcome::Replaced(conflicts.into_iter().collect())
        }
    }

    fn remove(&mut self, txid: &TxId) -> Option<PendingEntry> {
        let entry = self.entries.remove(txid)?;
        for input in entry.tx.inputs() {
            self.by_outpoint.remove(&input.outpoint);
        }
        Some(entry)
    }

    /// Removes and returns entries whose `not_before` is at or before
    /// `epoch`, ordered by fee descending then txid ascending.
    pub fn drain_matured(&mut self, epoch: Epoch) -> Vec<PendingEntry> {
        let matured: Vec<TxId> = self
            .entries
            .values()
            .filter(|e| !e.tx.validity.is_some_and(|v| v.is_premature(epoch)))
            .map(|e| e.txid)
            .collect();
        let mut out: Vec<PendingEntry> = matured.iter().filter_map(|t| self.remove(t)).collect();
        out.sort_by(|a, b| b.fee.cmp(&a.fee).then(a.txid.cmp(&b.txid)));
        out
    }
}

pub fn submit_pending(pool: &mut PendingPool, tx: Transaction, fee: Amount, _epoch: Epoch) -> PendingOutcome {
    pool.submit(tx, fee)
}
