use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use super::{decode, gas_cost, AccountState, CodeError, ContractAccount, Imm, Instr, VmOp, MAX_CALL_DEPTH, MAX_VM_STACK};
use crate::model::{AccessDecl, Address, Amount, Epoch, TxId, TxKind, Transaction};
use crate::rules::AccessMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VmEnv {
    pub epoch: Epoch,
    pub mode: AccessMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RevertReason {
    Explicit,
    StackUnderflow,
    StackOverflow,
    TypeError,
    Arithmetic,
    BadAddressIndex,
    InsufficientFunds,
}

impl RevertReason {
    pub fn code(self) -> u16 {
        match self {
            RevertReason::Explicit => 0,
            RevertReason::StackUnderflow => 1,
            RevertReason::StackOverflow => 2,
            RevertReason::TypeError => 3,
            RevertReason::Arithmetic => 4,
            RevertReason::BadAddressIndex => 5,
            RevertReason::InsufficientFunds => 6,
        }
    }
}

/// The state item whose access fell outside the declared footprint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccessDetail {
    BalanceRead(Address),
    BalanceWrite(Address),
    StorageRead(Address, u64),
    StorageWrite(Address, u64),
    Callee(Address),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecStatus {
    Committed,
    Reverted(RevertReason),
    AccessViolation(AccessDetail),
    OutOfGas,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub contract: Address,
    pub topic: u64,
    pub value: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecOutcome {
    pub status: ExecStatus,
    pub gas_used: u64,
    pub return_value: u64,
    /// Empty unless committed.
    pub events: Vec<Event>,
}

/// Why a contract transaction was refused before execution. A refused
/// transaction pays no fee and leaves no trace in state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CallRejection {
    NotAContractTx,
    UnknownContract(Address),
    InsufficientBalance,
    BadNonce { expected: u64, found: u64 },
    MissingAccessDecl,
    MalformedCode(CodeError),
}

impl fmt::Display for CallRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CallRejection::NotAContractTx => write!(f, "not a deploy or call transaction"),
            CallRejection::UnknownContract(a) => write!(f, "no contract at {a}"),
            CallRejection::InsufficientBalance => write!(f, "balance does not cover value and maximum fee"),
            CallRejection::BadNonce { expected, found } => write!(f, "nonce {found}, expected {expected}"),
            CallRejection::MissingAccessDecl => write!(f, "declared-access mode requires an access declaration"),
            CallRejection::MalformedCode(e) => write!(f, "malformed code: {e}"),
        }
    }
}

/// State changes of one executed contract transaction. Balance and storage
/// entries are absolute post-values; the fee is applied additively so that
/// concurrent transactions paying the operator commute.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Effects {
    pub balances: BTreeMap<Address, Amount>,
    pub storage: BTreeMap<(Address, u64), u64>,
    pub created: Option<(Address, ContractAccount)>,
    pub payer: Address,
    pub nonce: u64,
    pub fee: Amount,
}

impl Effects {
    fn fee_only(payer: Address, nonce: u64, fee: Amount) -> Self {
        Effects { balances: BTreeMap::new(), storage: BTreeMap::new(), created: None, payer, nonce, fee }
    }

    /// Returns `None` if the fee cannot be paid or credited; `state` may then
    /// be partially updated.
    pub fn apply(&self, state: &mut AccountState, operator: Address) -> Option<()> {
        if let Some((addr, contract)) = &self.created {
            state.contracts.insert(*addr, contract.clone());
        }
        for (a, v) in &self.balances {
            state.set_balance(*a, *v);
        }
        for ((c, k), v) in &self.storage {
            if let Some(contract) = state.contracts.get_mut(c) {
                if *v == 0 {
                    contract.storage.remove(k);
                } else {
                    contract.storage.insert(*k, *v);
                }
            }
        }
        state.nonces.insert(self.payer, self.nonce);
        state.debit(self.payer, self.fee)?;
        state.credit(operator, self.fee)
    }
}

/// Gas charged for deploying `code`: one unit per byte.
pub fn deploy_gas(code: &[u8]) -> u64 {
    code.len() as u64
}

fn max_fee(gas_limit: u64, gas_price: u64) -> Option<Amount> {
    gas_limit.checked_mul(gas_price).map(Amount)
}

fn check_nonce(state: &AccountState, who: &Address, found: u64) -> Result<(), CallRejection> {
    let expected = state.nonce(who);
    if expected != found {
        return Err(CallRejection::BadNonce { expected, found });
    }
    Ok(())
}

/// Executes a `Deploy` transaction whose id becomes the contract address.
pub fn deploy(state: &AccountState, tx: &Transaction, txid: &TxId) -> Result<(Effects, ExecOutcome), CallRejection> {
    let TxKind::Deploy { code, endowment, payer, gas_limit, gas_price, footprint } = &tx.kind else {
        return Err(CallRejection::NotAContractTx);
    };
    decode(code).map_err(CallRejection::MalformedCode)?;
    let payer = Address::from_public_key(payer);
    check_nonce(state, &payer, tx.nonce)?;
    let balance = state.balance(&payer);
    let needed = max_fee(*gas_limit, *gas_price).and_then(|f| f.checked_add(*endowment));
    if needed.and_then(|n| balance.checked_sub(n)).is_none() {
        return Err(CallRejection::InsufficientBalance);
    }
    let nonce = tx.nonce + 1;
    let gas = deploy_gas(code);
    if gas > *gas_limit {
        let fee = Amount(gas_limit * gas_price);
        let outcome = ExecOutcome { status: ExecStatus::OutOfGas, gas_used: *gas_limit, return_value: 0, events: Vec::new() };
        return Ok((Effects::fee_only(payer, nonce, fee), outcome));
    }
    let address = Address(txid.0);
    let contract = ContractAccount { code: code.clone(), storage: BTreeMap::new(), balance: Amount::ZERO, footprint: footprint.clone() };
    let mut effects = Effects::fee_only(payer, nonce, Amount(gas * gas_price));
    effects.created = Some((address, contract));
    // the fee itself is debited when the effects are applied
    effects.balances.insert(payer, balance.checked_sub(*endowment).ok_or(CallRejection::InsufficientBalance)?);
    effects.balances.insert(address, *endowment);
    let outcome = ExecOutcome { status: ExecStatus::Committed, gas_used: gas, return_value: 0, events: Vec::new() };
    Ok((effects, outcome))
}

/// Executes a `Call` transaction against a snapshot of `state`.
pub fn invoke(state: &AccountState, tx: &Transaction, env: &VmEnv) -> Result<(Effects, ExecOutcome), CallRejection> {
    let TxKind::Call { contract, arg, attached, caller, gas_limit, gas_price, addresses, access } = &tx.kind else {
        return Err(CallRejection::NotAContractTx);
    };
    let caller = Address::from_public_key(caller);
    if !state.contracts.contains_key(contract) {
        return Err(CallRejection::UnknownContract(*contract));
    }
    let decl = match (env.mode, access) {
        (AccessMode::Declared, None) => return Err(CallRejection::MissingAccessDecl),
        (AccessMode::Declared, Some(_)) => super::footprint(tx, state),
        (AccessMode::Dynamic, _) => None,
    };
    check_nonce(state, &caller, tx.nonce)?;
    let needed = max_fee(*gas_limit, *gas_price).and_then(|f| f.checked_add(*attached));
    if needed.and_then(|n| state.balance(&caller).checked_sub(n)).is_none() {
        return Err(CallRejection::InsufficientBalance);
    }
    let nonce = tx.nonce + 1;

    let mut m = Machine {
        base: state,
        balances: BTreeMap::new(),
        storage: BTreeMap::new(),
        events: Vec::new(),
        gas_used: 0,
        gas_limit: *gas_limit,
        decl: decl.as_ref(),
        addresses,
        epoch: env.epoch,
    };
    let result = m.transfer_value(caller, *contract, *attached).and_then(|ok| match ok {
        Ok(()) => m.run(*contract, caller, *arg, *attached, 1),
        Err(reason) => Ok(FrameEnd::Revert(reason)),
    });
    let (status, return_value) = match result {
        Ok(FrameEnd::Return(v)) => (ExecStatus::Committed, v),
        Ok(FrameEnd::Revert(reason)) => (ExecStatus::Reverted(reason), 0),
        Err(Abort::OutOfGas) => {
            m.gas_used = m.gas_limit;
            (ExecStatus::OutOfGas, 0)
        }
        Err(Abort::Access(detail)) => (ExecStatus::AccessViolation(detail), 0),
    };
    let fee = Amount(m.gas_used * gas_price);
    let mut effects = Effects::fee_only(caller, nonce, fee);
    let mut outcome = ExecOutcome { status, gas_used: m.gas_used, return_value, events: Vec::new() };
    if status == ExecStatus::Committed {
        effects.balances = m.balances;
        effects.storage = m.storage;
        outcome.events = m.events;
    }
    Ok((effects, outcome))
}

enum FrameEnd {
    Return(u64),
    Revert(RevertReason),
}

/// Failures that end the whole transaction regardless of call depth.
enum Abort {
    OutOfGas,
    Access(AccessDetail),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Word {
    Int(u64),
    Addr(Address),
}

struct Machine<'a> {
    base: &'a AccountState,
    balances: BTreeMap<Address, Amount>,
    storage: BTreeMap<(Address, u64), u64>,
    events: Vec<Event>,
    gas_used: u64,
    gas_limit: u64,
    decl: Option<&'a AccessDecl>,
    addresses: &'a [Address],
    epoch: Epoch,
}

type Step<T> = Result<Result<T, RevertReason>, Abort>;

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(reason) => return Ok(FrameEnd::Revert(reason)),
        }
    };
}

impl Machine<'_> {
    fn read_balance(&self, a: &Address) -> Result<Amount, Abort> {
        if let Some(d) = self.decl {
            if !d.can_read_balance(a) {
                return Err(Abort::Access(AccessDetail::BalanceRead(*a)));
            }
        }
        Ok(self.balances.get(a).copied().unwrap_or_else(|| self.base.balance(a)))
    }

    fn write_balance(&mut self, a: Address, v: Amount) -> Result<(), Abort> {
        if let Some(d) = self.decl {
            if !d.balances_written.contains(&a) {
                return Err(Abort::Access(AccessDetail::BalanceWrite(a)));
            }
        }
        self.balances.insert(a, v);
        Ok(())
    }

    fn transfer_value(&mut self, from: Address, to: Address, amount: Amount) -> Step<()> {
        if amount == Amount::ZERO {
            return Ok(Ok(()));
        }
        let Some(src) = self.read_balance(&from)?.checked_sub(amount) else {
            return Ok(Err(RevertReason::InsufficientFunds));
        };
        self.write_balance(from, src)?;
        let Some(dst) = self.read_balance(&to)?.checked_add(amount) else {
            return Ok(Err(RevertReason::Arithmetic));
        };
        self.write_balance(to, dst)?;
        Ok(Ok(()))
    }

    fn sload(&self, contract: Address, key: u64) -> Result<u64, Abort> {
        if let Some(d) = self.decl {
            if !d.can_read_storage(&(contract, key)) {
                return Err(Abort::Access(AccessDetail::StorageRead(contract, key)));
            }
        }
        Ok(self
            .storage
            .get(&(contract, key))
            .copied()
            .unwrap_or_else(|| self.base.storage(&contract, key)))
    }

    fn sstore(&mut self, contract: Address, key: u64, value: u64) -> Result<(), Abort> {
        if let Some(d) = self.decl {
            if !d.storage_written.contains(&(contract, key)) {
                return Err(Abort::Access(AccessDetail::StorageWrite(contract, key)));
            }
        }
        self.storage.insert((contract, key), value);
        Ok(())
    }

    fn charge(&mut self, op: VmOp) -> Result<(), Abort> {
        let next = self.gas_used + gas_cost(op);
        if next > self.gas_limit {
            return Err(Abort::OutOfGas);
        }
        self.gas_used = next;
        Ok(())
    }

    fn run(&mut self, this: Address, caller: Address, arg: u64, value: Amount, depth: u32) -> Result<FrameEnd, Abort> {
        let code = &self.base.contracts[&this].code;
        // deployed code was validated at deploy time
        let program: Vec<Instr> = match decode(code) {
            Ok(p) => p,
            Err(_) => return Ok(FrameEnd::Revert(RevertReason::Explicit)),
        };
        let mut stack: Vec<Word> = Vec::new();
        let mut pc = 0;
        while let Some(ins) = program.get(pc) {
            self.charge(ins.op)?;
            pc += 1;
            if stack.len() >= MAX_VM_STACK && pushes(ins.op) {
                return Ok(FrameEnd::Revert(RevertReason::StackOverflow));
            }
            match ins.op {
                VmOp::PushI => {
                    let Imm::Int(v) = ins.imm else { unreachable!() };
                    stack.push(Word::Int(v));
                }
                VmOp::PushA => {
                    let Imm::Index(i) = ins.imm else { unreachable!() };
                    let a = tri!(self.addresses.get(i as usize).ok_or(RevertReason::BadAddressIndex));
                    stack.push(Word::Addr(*a));
                }
                VmOp::PushAddr => {
                    let Imm::Addr(a) = ins.imm else { unreachable!() };
                    stack.push(Word::Addr(a));
                }
                VmOp::Dup => {
                    let w = *tri!(stack.last().ok_or(RevertReason::StackUnderflow));
                    stack.push(w);
                }
                VmOp::Drop => {
                    tri!(pop(&mut stack));
                }
                VmOp::Swap => {
                    let n = stack.len();
                    if n < 2 {
                        return Ok(FrameEnd::Revert(RevertReason::StackUnderflow));
                    }
                    stack.swap(n - 1, n - 2);
                }
                VmOp::Add | VmOp::Sub | VmOp::Mul | VmOp::Div | VmOp::Mod | VmOp::Lt | VmOp::Gt => {
                    let b = tri!(pop_int(&mut stack));
                    let a = tri!(pop_int(&mut stack));
                    let r = match ins.op {
                        VmOp::Add => a.checked_add(b),
                        VmOp::Sub => a.checked_sub(b),
                        VmOp::Mul => a.checked_mul(b),
                        VmOp::Div => a.checked_div(b),
                        VmOp::Mod => a.checked_rem(b),
                        VmOp::Lt => Some((a < b) as u64),
                        _ => Some((a > b) as u64),
                    };
                    stack.push(Word::Int(tri!(r.ok_or(RevertReason::Arithmetic))));
                }
                VmOp::Eq => {
                    let b = tri!(pop(&mut stack));
                    let a = tri!(pop(&mut stack));
                    let eq = match (a, b) {
                        (Word::Int(x), Word::Int(y)) => x == y,
                        (Word::Addr(x), Word::Addr(y)) => x == y,
                        _ => return Ok(FrameEnd::Revert(RevertReason::TypeError)),
                    };
                    stack.push(Word::Int(eq as u64));
                }
                VmOp::Not => {
                    let a = tri!(pop_int(&mut stack));
                    stack.push(Word::Int((a == 0) as u64));
                }
                VmOp::Jump => {
                    let Imm::Target(t) = ins.imm else { unreachable!() };
                    pc = t;
                }
                VmOp::JumpI => {
                    let Imm::Target(t) = ins.imm else { unreachable!() };
                    if tri!(pop_int(&mut stack)) != 0 {
                        pc = t;
                    }
                }
                VmOp::Arg => stack.push(Word::Int(arg)),
                VmOp::Caller => stack.push(Word::Addr(caller)),
                VmOp::SelfAddr => stack.push(Word::Addr(this)),
                VmOp::Value => stack.push(Word::Int(value.0)),
                VmOp::Epoch => stack.push(Word::Int(self.epoch.0)),
                VmOp::Balance => {
                    let a = tri!(pop_addr(&mut stack));
                    let b = self.read_balance(&a)?;
                    stack.push(Word::Int(b.0));
                }
                VmOp::SLoad => {
                    let k = tri!(pop_int(&mut stack));
                    let v = self.sload(this, k)?;
                    stack.push(Word::Int(v));
                }
                VmOp::SStore => {
                    let v = tri!(pop_int(&mut stack));
                    let k = tri!(pop_int(&mut stack));
                    self.sstore(this, k, v)?;
                }
                VmOp::Transfer => {
                    let to = tri!(pop_addr(&mut stack));
                    let amount = tri!(pop_int(&mut stack));
                    tri!(self.transfer_value(this, to, Amount(amount))?);
                }
                VmOp::Event => {
                    let v = tri!(pop_int(&mut stack));
                    let topic = tri!(pop_int(&mut stack));
                    self.events.push(Event { contract: this, topic, value: v });
                }
                VmOp::Call => {
                    let callee = tri!(pop_addr(&mut stack));
                    let callee_arg = tri!(pop_int(&mut stack));
                    let (ret, ok) = self.call(this, callee, callee_arg, depth)?;
                    stack.push(Word::Int(ret));
                    stack.push(Word::Int(ok as u64));
                }
                VmOp::Return => return Ok(FrameEnd::Return(tri!(pop_int(&mut stack)))),
                VmOp::Halt => return Ok(FrameEnd::Return(0)),
                VmOp::Revert => return Ok(FrameEnd::Revert(RevertReason::Explicit)),
            }
        }
        Ok(FrameEnd::Return(0))
    }

    /// Runs a nested call. A callee revert rolls back its own changes and is
    /// reported to the caller as status 0.
    fn call(&mut self, this: Address, callee: Address, arg: u64, depth: u32) -> Result<(u64, bool), Abort> {
        if let Some(d) = self.decl {
            if !d.callees.contains(&callee) {
                return Err(Abort::Access(AccessDetail::Callee(callee)));
            }
        }
        if depth >= MAX_CALL_DEPTH || !self.base.contracts.contains_key(&callee) {
            return Ok((0, false));
        }
        let snapshot = (self.balances.clone(), self.storage.clone(), self.events.len());
        match self.run(callee, this, arg, Amount::ZERO, depth + 1)? {
            FrameEnd::Return(v) => Ok((v, true)),
            FrameEnd::Revert(_) => {
                self.balances = snapshot.0;
                self.storage = snapshot.1;
                self.events.truncate(snapshot.2);
                Ok((0, false))
            }
        }
    }
}

fn pushes(op: VmOp) -> bool {
    matches!(
        op,
        VmOp::PushI
            | VmOp::PushA
            | VmOp::PushAddr
            | VmOp::Dup
            | VmOp::Arg
            | VmOp::Caller
            | VmOp::SelfAddr
            | VmOp::Value
            | VmOp::Epoch
            | VmOp::Call
    )
}

fn pop(stack: &mut Vec<Word>) -> Result<Word, RevertReason> {
    stack.pop().ok_or(RevertReason::StackUnderflow)
}

fn pop_int(stack: &mut Vec<Word>) -> Result<u64, RevertReason> {
    match pop(stack)? {
        Word::Int(v) => Ok(v),
        Word::Addr(_) => Err(RevertReason::TypeError),
    }
}

fn pop_addr(stack: &mut Vec<Word>) -> Result<Address, RevertReason> {
    match pop(stack)? {
        Word::Addr(a) => Ok(a),
        Word::Int(_) => Err(RevertReason::TypeError),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{keygen, PublicKey};
    use crate::vm::assemble;
    use alloc::collections::BTreeSet;
    use alloc::vec;

    const DYN: VmEnv = VmEnv { epoch: Epoch(3), mode: AccessMode::Dynamic };

    fn pk(i: u8) -> PublicKey {
        keygen(&[i; 32]).public()
    }

    fn with_contract(src: &str, balance: u64) -> (AccountState, Address) {
        let mut s = AccountState::new();
        let c = Address([0xcc; 32]);
        let code = assemble(src, |_| None).unwrap();
        s.contracts.insert(
            c,
            ContractAccount { code, storage: BTreeMap::new(), balance: Amount(balance), footprint: AccessDecl::default() },
        );
        s.credit(Address::from_public_key(&pk(1)), Amount(1000)).unwrap();
        (s, c)
    }

    fn call(contract: Address, arg: u64, gas_limit: u64) -> Transaction {
        Transaction::new(TxKind::Call {
            contract,
            arg,
            attached: Amount::ZERO,
            caller: pk(1),
            gas_limit,
            gas_price: 1,
            addresses: vec![Address([9; 32])],
            access: None,
        })
    }

    #[test]
    fn arithmetic_and_return() {
        let (s, c) = with_contract("ARG PUSHI 5 MUL PUSHI 2 SUB RETURN", 0);
        let (_, out) = invoke(&s, &call(c, 7, 100), &DYN).unwrap();
        assert_eq!(out.status, ExecStatus::Committed);
        assert_eq!(out.return_value, 33);
        assert_eq!(out.gas_used, 6);
    }

    #[test]
    fn out_of_gas_consumes_limit_and_discards_writes() {
        let (s, c) = with_contract("PUSHI 1 PUSHI 2 SSTORE HALT", 0);
        let (fx, out) = invoke(&s, &call(c, 0, 13), &DYN).unwrap();
        assert_eq!(out.status, ExecStatus::Committed);
        assert_eq!(fx.storage.get(&(c, 1)), Some(&2));
        let (fx, out) = invoke(&s, &call(c, 0, 12), &DYN).unwrap();
        assert_eq!(out.status, ExecStatus::OutOfGas);
        assert_eq!(out.gas_used, 12);
        assert!(fx.storage.is_empty());
        assert_eq!(fx.fee, Amount(12));
    }

    #[test]
    fn type_errors_and_arithmetic_revert() {
        for src in ["SELF PUSHI 1 ADD", "PUSHI 1 PUSHI 0 DIV", "PUSHI 0 PUSHI 1 SUB", "SELF PUSHI 1 EQ", "DROP"] {
            let (s, c) = with_contract(src, 0);
            let (fx, out) = invoke(&s, &call(c, 0, 100), &DYN).unwrap();
            assert!(matches!(out.status, ExecStatus::Reverted(_)), "{src}");
            assert!(fx.balances.is_empty());
        }
    }

    #[test]
    fn transfer_moves_contract_funds() {
        let (mut s, c) = with_contract("PUSHI 30 PUSHA 0 TRANSFER", 50);
        let (fx, out) = invoke(&s, &call(c, 0, 100), &DYN).unwrap();
        assert_eq!(out.status, ExecStatus::Committed);
        fx.apply(&mut s, Address([0xee; 32])).unwrap();
        assert_eq!(s.balance(&c), Amount(20));
        assert_eq!(s.balance(&Address([9; 32])), Amount(30));
        assert_eq!(s.balance(&Address([0xee; 32])), Amount(out.gas_used));
        assert_eq!(s.nonce(&Address::from_public_key(&pk(1))), 1);
    }

    #[test]
    fn overdraft_reverts() {
        let (s, c) = with_contract("PUSHI 51 PUSHA 0 TRANSFER", 50);
        let (_, out) = invoke(&s, &call(c, 0, 100), &DYN).unwrap();
        assert_eq!(out.status, ExecStatus::Reverted(RevertReason::InsufficientFunds));
    }

    #[test]
    fn jumps_loop() {
        // counts arg down to zero, storing iterations in slot 0
        let src = "
            top: ARG PUSHI 0 SLOAD EQ JUMPI done
                 PUSHI 0 PUSHI 0 SLOAD PUSHI 1 ADD SSTORE
                 JUMP top
            done: HALT";
        let (s, c) = with_contract(src, 0);
        let (fx, out) = invoke(&s, &call(c, 4, 1000), &DYN).unwrap();
        assert_eq!(out.status, ExecStatus::Committed);
        assert_eq!(fx.storage[&(c, 0)], 4);
    }

    #[test]
    fn rejections_leave_no_fee() {
        let (s, c) = with_contract("HALT", 0);
        assert_eq!(
            invoke(&s, &call(Address([1; 32]), 0, 10), &DYN).unwrap_err(),
            CallRejection::UnknownContract(Address([1; 32]))
        );
        assert_eq!(invoke(&s, &call(c, 0, 1001), &DYN).unwrap_err(), CallRejection::InsufficientBalance);
        let mut tx = call(c, 0, 10);
        tx.nonce = 4;
        assert_eq!(invoke(&s, &tx, &DYN).unwrap_err(), CallRejection::BadNonce { expected: 0, found: 4 });
        let declared = VmEnv { epoch: Epoch(0), mode: AccessMode::Declared };
        assert_eq!(invoke(&s, &call(c, 0, 10), &declared).unwrap_err(), CallRejection::MissingAccessDecl);
    }

    #[test]
    fn declared_mode_traps_undeclared_access() {
        let (s, c) = with_contract("PUSHI 1 SLOAD", 0);
        let mut tx = call(c, 0, 100);
        if let TxKind::Call { access, .. } = &mut tx.kind {
            *access = Some(AccessDecl::default());
        }
        let declared = VmEnv { epoch: Epoch(0), mode: AccessMode::Declared };
        let (fx, out) = invoke(&s, &tx, &declared).unwrap();
        assert_eq!(out.status, ExecStatus::AccessViolation(AccessDetail::StorageRead(c, 1)));
        assert_eq!(fx.fee, Amount(out.gas_used));
        if let TxKind::Call { access, .. } = &mut tx.kind {
            *access = Some(AccessDecl { storage_read: BTreeSet::from([(c, 1)]), ..Default::default() });
        }
        let (_, out) = invoke(&s, &tx, &declared).unwrap();
        assert_eq!(out.status, ExecStatus::Committed);
    }

    #[test]
    fn nested_call_revert_is_isolated() {
        let (mut s, c) = with_contract("HALT", 0);
        let callee = Address([0xdd; 32]);
        let caller_src = alloc::format!(
            "PUSHI 1 PUSHI 11 SSTORE PUSHI 0 PUSHADDR 0x{} CALL SWAP PUSHI 2 SWAP SSTORE PUSHI 3 SWAP SSTORE",
            hex32(&callee)
        );
        s.contracts.get_mut(&c).unwrap().code = assemble(&caller_src, |_| None).unwrap();
        s.contracts.insert(
            callee,
            ContractAccount {
                code: assemble("PUSHI 5 PUSHI 6 SSTORE REVERT", |_| None).unwrap(),
                storage: BTreeMap::new(),
                balance: Amount::ZERO,
                footprint: AccessDecl::default(),
            },
        );
        let (fx, out) = invoke(&s, &call(c, 0, 1000), &DYN).unwrap();
        assert_eq!(out.status, ExecStatus::Committed);
        assert_eq!(fx.storage.get(&(c, 1)), Some(&11));
        assert_eq!(fx.storage.get(&(callee, 5)), None);
        // status 0 stored in slot 2, return value 0 in slot 3
        assert_eq!(fx.storage.get(&(c, 2)), Some(&0));
        assert_eq!(fx.storage.get(&(c, 3)), Some(&0));
    }

    fn hex32(a: &Address) -> alloc::string::String {
        a.0.iter().map(|b| alloc::format!("{b:02x}")).collect()
    }

    #[test]
    fn recursion_is_depth_limited() {
        // each frame calls itself and stores the returned depth count + 1
        let mut s = AccountState::new();
        let c = Address([0xab; 32]);
        let src = alloc::format!("PUSHI 0 PUSHADDR 0x{} CALL DROP PUSHI 1 ADD RETURN", hex32(&c));
        s.contracts.insert(
            c,
            ContractAccount {
                code: assemble(&src, |_| None).unwrap(),
                storage: BTreeMap::new(),
                balance: Amount::ZERO,
                footprint: AccessDecl::default(),
            },
        );
        s.credit(Address::from_public_key(&pk(1)), Amount(1000)).unwrap();
        let (_, out) = invoke(&s, &call(c, 0, 1000), &DYN).unwrap();
        assert_eq!(out.status, ExecStatus::Committed);
        assert_eq!(out.return_value, MAX_CALL_DEPTH as u64);
    }

    #[test]
    fn deploy_creates_contract_and_charges_per_byte() {
        let mut s = AccountState::new();
        let payer = Address::from_public_key(&pk(1));
        s.credit(payer, Amount(100)).unwrap();
        let code = assemble("PUSHI 1 RETURN", |_| None).unwrap();
        let tx = Transaction::new(TxKind::Deploy {
            code: code.clone(),
            endowment: Amount(10),
            payer: pk(1),
            gas_limit: 20,
            gas_price: 2,
            footprint: AccessDecl::default(),
        });
        let txid = tx.txid();
        let (fx, out) = deploy(&s, &tx, &txid).unwrap();
        assert_eq!(out.gas_used, code.len() as u64);
        fx.apply(&mut s, Address([0xee; 32])).unwrap();
        assert_eq!(s.balance(&Address(txid.0)), Amount(10));
        assert_eq!(s.balance(&payer), Amount(100 - 10 - 2 * code.len() as u64));
        assert_eq!(s.total(), Some(Amount(100)));
    }
}
