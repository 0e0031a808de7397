//! Batch scheduling of contract calls.
//!
//! In declared mode the batch is cut into maximal contiguous segments of
//! pairwise non-conflicting calls. Every call in a segment executes against
//! the state at the segment start, in parallel when `std` is enabled, and the
//! resulting effects are committed in submission order. Dynamic mode runs
//! every call alone against the state left by its predecessor.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::{invoke, AccountState, CallRejection, Effects, ExecOutcome, VmEnv};
use crate::model::{AccessDecl, Address, TxKind, Transaction};
use crate::rules::AccessMode;

pub type CallResult = Result<ExecOutcome, CallRejection>;

/// Effective footprint of a call: its declaration, widened by the balances
/// every call touches implicitly (the caller for value and fee, the target
/// contract for value) and by the deploy-time footprints of the declared
/// callees, transitively. `None` when the call carries no declaration.
pub fn footprint(tx: &Transaction, state: &AccountState) -> Option<AccessDecl> {
    let TxKind::Call { contract, caller, access: Some(decl), .. } = &tx.kind else {
        return None;
    };
    let mut fp = decl.clone();
    fp.balances_written.insert(Address::from_public_key(caller));
    fp.balances_written.insert(*contract);
    let mut queue: Vec<Address> = decl.callees.iter().copied().collect();
    let mut seen = BTreeSet::new();
    while let Some(c) = queue.pop() {
        if !seen.insert(c) {
            continue;
        }
        if let Some(account) = state.contracts.get(&c) {
            fp.merge(&account.footprint);
            queue.extend(account.footprint.callees.iter().copied());
        }
    }
    Some(fp)
}

fn touches(fp: &AccessDecl, a: &Address) -> bool {
    fp.balances_read.contains(a) || fp.balances_written.contains(a) || fp.callees.contains(a)
}

/// Whether two footprints may not run concurrently: a write of one meets a
/// read or write of the other, or either touches the fee-collecting operator.
pub fn conflicts(a: &AccessDecl, b: &AccessDecl, operator: &Address) -> bool {
    let writes_meet = |x: &AccessDecl, y: &AccessDecl| {
        x.balances_written.iter().any(|w| y.can_read_balance(w))
            || x.storage_written.iter().any(|w| y.can_read_storage(w))
    };
    touches(a, operator) || touches(b, operator) || writes_meet(a, b) || writes_meet(b, a)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Telemetry {
    /// Size of every executed segment, in order.
    pub segments: Vec<usize>,
    /// Most calls observed executing at the same instant.
    pub max_in_flight: usize,
}

impl Telemetry {
    pub fn max_segment(&self) -> usize {
        self.segments.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchRun {
    pub results: Vec<CallResult>,
    pub telemetry: Telemetry,
}

/// Splits `txs` into contiguous conflict-free segments. Calls without a
/// declaration stand alone.
pub fn segments(
    txs: &[Transaction],
    mode: AccessMode,
    operator: &Address,
    state: &AccountState,
) -> Vec<core::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut members: Vec<AccessDecl> = Vec::new();
    for (i, tx) in txs.iter().enumerate() {
        let fp = match mode {
            AccessMode::Declared => footprint(tx, state),
            AccessMode::Dynamic => None,
        };
        let fits = match &fp {
            Some(fp) => members.iter().all(|m| !conflicts(m, fp, operator)),
            None => false,
        };
        if !fits && i > start {
            out.push(start..i);
            start = i;
            members.clear();
        }
        match fp {
            Some(fp) => members.push(fp),
            None => {
                out.push(i..i + 1);
                start = i + 1;
            }
        }
    }
    if start < txs.len() {
        out.push(start..txs.len());
    }
    out
}

/// Executes a run of calls and commits their effects in order, invoking
/// `on_commit` with the state after each call.
pub fn schedule_batch(
    state: &mut AccountState,
    txs: &[Transaction],
    env: &VmEnv,
    operator: Address,
    workers: usize,
    mut on_commit: impl FnMut(usize, &AccountState, &CallResult),
) -> BatchRun {
    let mut results = Vec::with_capacity(txs.len());
    let mut telemetry = Telemetry::default();
    for seg in segments(txs, env.mode, &operator, state) {
        let (executed, in_flight) = run_segment(state, &txs[seg.clone()], env, workers);
        telemetry.segments.push(seg.len());
        telemetry.max_in_flight = telemetry.max_in_flight.max(in_flight);
        for (i, r) in seg.zip(executed) {
            let result = r.map(|(effects, outcome)| {
                if effects.apply(state, operator).is_none() {
                    // unreachable after the pre-execution balance check
                    debug_assert!(false, "fee not payable");
                }
                outcome
            });
            on_commit(i, state, &result);
            results.push(result);
        }
    }
    BatchRun { results, telemetry }
}

type Executed = Result<(Effects, ExecOutcome), CallRejection>;

#[cfg(feature = "std")]
fn run_segment(state: &AccountState, txs: &[Transaction], env: &VmEnv, workers: usize) -> (Vec<Executed>, usize) {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    if txs.len() < 2 || workers < 2 {
        return (txs.iter().map(|tx| invoke(state, tx, env)).collect(), txs.len().min(1));
    }
    let next = AtomicUsize::new(0);
    let in_flight = AtomicUsize::new(0);
    let peak = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Executed>>> = txs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(txs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(tx) = txs.get(i) else { break };
                let now = in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                peak.fetch_max(now, Ordering::SeqCst);
                let r = invoke(state, tx, env);
                in_flight.fetch_sub(1, Ordering::SeqCst);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    let results = slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot is filled"))
        .collect();
    (results, peak.into_inner())
}

#[cfg(not(feature = "std"))]
fn run_segment(state: &AccountState, txs: &[Transaction], env: &VmEnv, _workers: usize) -> (Vec<Executed>, usize) {
    (txs.iter().map(|tx| invoke(state, tx, env)).collect(), txs.len().min(1))
}
