//! Stateful contracts: a gas-metered stack machine over tagged 64-bit words,
//! with storage, balances, transfers, nested calls, and a scheduler that runs
//! non-conflicting declared-access calls in parallel.
//!
//! Bytecode uses one-byte opcodes with little-endian immediates:
//!
//! | byte | mnemonic | immediate | gas |
//! |------|----------|-----------|-----|
//! | 0x01 | PUSHI    | u64       | 1   |
//! | 0x02 | PUSHA    | u8 index into the call's address table | 1 |
//! | 0x03 | PUSHADDR | 32-byte address literal | 1 |
//! | 0x10 | DUP      |           | 1   |
//! | 0x11 | DROP     |           | 1   |
//! | 0x12 | SWAP     |           | 1   |
//! | 0x20 | ADD      |           | 1   |
//! | 0x21 | SUB      |           | 1   |
//! | 0x22 | MUL      |           | 1   |
//! | 0x23 | DIV      |           | 1   |
//! | 0x24 | MOD      |           | 1   |
//! | 0x25 | LT       |           | 1   |
//! | 0x26 | GT       |           | 1   |
//! | 0x27 | EQ       |           | 1   |
//! | 0x28 | NOT      |           | 1   |
//! | 0x30 | JUMP     | u16 target offset | 1 |
//! | 0x31 | JUMPI    | u16 target offset | 1 |
//! | 0x40 | ARG      |           | 1   |
//! | 0x41 | CALLER   |           | 1   |
//! | 0x42 | SELF     |           | 1   |
//! | 0x43 | VALUE    |           | 1   |
//! | 0x44 | EPOCH    |           | 1   |
//! | 0x50 | BALANCE  |           | 5   |
//! | 0x51 | SLOAD    |           | 5   |
//! | 0x52 | SSTORE   |           | 10  |
//! | 0x53 | TRANSFER |           | 10  |
//! | 0x54 | EVENT    |           | 1   |
//! | 0x55 | CALL     |           | 20  |
//! | 0x60 | RETURN   |           | 1   |
//! | 0x61 | HALT     |           | 1   |
//! | 0x62 | REVERT   |           | 1   |
//!
//! Binary operators pop the right operand first: `a b SUB` computes `a - b`.

mod asm;
mod exec;
mod schedule;

pub use asm::{assemble, disassemble, AsmError};
pub use exec::{
    deploy, deploy_gas, invoke, AccessDetail, CallRejection, Effects, Event, ExecOutcome, ExecStatus,
    RevertReason, VmEnv,
};
pub use schedule::{conflicts, footprint, schedule_batch, segments, BatchRun, CallResult, Telemetry};

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::crypto;
use crate::model::{AccessDecl, Address, Amount, MAX_CODE_LEN};

pub const MAX_CALL_DEPTH: u32 = 8;
pub const MAX_VM_STACK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum VmOp {
    PushI = 0x01,
    PushA = 0x02,
    PushAddr = 0x03,
    Dup = 0x10,
    Drop = 0x11,
    Swap = 0x12,
    Add = 0x20,
    Sub = 0x21,
    Mul = 0x22,
    Div = 0x23,
    Mod = 0x24,
    Lt = 0x25,
    Gt = 0x26,
    Eq = 0x27,
    Not = 0x28,
    Jump = 0x30,
    JumpI = 0x31,
    Arg = 0x40,
    Caller = 0x41,
    SelfAddr = 0x42,
    Value = 0x43,
    Epoch = 0x44,
    Balance = 0x50,
    SLoad = 0x51,
    SStore = 0x52,
    Transfer = 0x53,
    Event = 0x54,
    Call = 0x55,
    Return = 0x60,
    Halt = 0x61,
    Revert = 0x62,
}

impl VmOp {
    pub const ALL: [VmOp; 31] = [
        VmOp::PushI,
        VmOp::PushA,
        VmOp::PushAddr,
        VmOp::Dup,
        VmOp::Drop,
        VmOp::Swap,
        VmOp::Add,
        VmOp::Sub,
        VmOp::Mul,
        VmOp::Div,
        VmOp::Mod,
        VmOp::Lt,
        VmOp::Gt,
        VmOp::Eq,
        VmOp::Not,
        VmOp::Jump,
        VmOp::JumpI,
        VmOp::Arg,
        VmOp::Caller,
        VmOp::SelfAddr,
        VmOp::Value,
        VmOp::Epoch,
        VmOp::Balance,
        VmOp::SLoad,
        VmOp::SStore,
        VmOp::Transfer,
        VmOp::Event,
        VmOp::Call,
        VmOp::Return,
        VmOp::Halt,
        VmOp::Revert,
    ];

    pub fn from_byte(b: u8) -> Option<VmOp> {
        VmOp::ALL.into_iter().find(|op| *op as u8 == b)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            VmOp::PushI => "PUSHI",
            VmOp::PushA => "PUSHA",
            VmOp::PushAddr => "PUSHADDR",
            VmOp::Dup => "DUP",
            VmOp::Drop => "DROP",
            VmOp::Swap => "SWAP",
            VmOp::Add => "ADD",
            VmOp::Sub => "SUB",
            VmOp::Mul => "MUL",
            VmOp::Div => "DIV",
            VmOp::Mod => "MOD",
            VmOp::Lt => "LT",
            VmOp::Gt => "GT",
            VmOp::Eq => "EQ",
            VmOp::Not => "NOT",
            VmOp::Jump => "JUMP",
            VmOp::JumpI => "JUMPI",
            VmOp::Arg => "ARG",
            VmOp::Caller => "CALLER",
            VmOp::SelfAddr => "SELF",
            VmOp::Value => "VALUE",
            VmOp::Epoch => "EPOCH",
            VmOp::Balance => "BALANCE",
            VmOp::SLoad => "SLOAD",
            VmOp::SStore => "SSTORE",
            VmOp::Transfer => "TRANSFER",
            VmOp::Event => "EVENT",
            VmOp::Call => "CALL",
            VmOp::Return => "RETURN",
            VmOp::Halt => "HALT",
            VmOp::Revert => "REVERT",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<VmOp> {
        VmOp::ALL.into_iter().find(|op| op.mnemonic().eq_ignore_ascii_case(s))
    }

    /// Immediate operand width in bytes.
    pub fn immediate_len(self) -> usize {
        match self {
            VmOp::PushI => 8,
            VmOp::PushA => 1,
            VmOp::PushAddr => 32,
            VmOp::Jump | VmOp::JumpI => 2,
            _ => 0,
        }
    }
}

pub fn gas_cost(op: VmOp) -> u64 {
    match op {
        VmOp::SStore | VmOp::Transfer => 10,
        VmOp::Call => 20,
        VmOp::SLoad | VmOp::Balance => 5,
        _ => 1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Imm {
    None,
    Int(u64),
    Index(u8),
    Addr(Address),
    /// Resolved instruction index of a jump target.
    Target(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Instr {
    pub op: VmOp,
    pub imm: Imm,
    /// Byte offset of the opcode.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CodeError {
    TooLong(usize),
    UnknownOpcode { byte: u8, offset: usize },
    TruncatedImmediate { offset: usize },
    BadJumpTarget { offset: usize, target: usize },
}

impl fmt::Display for CodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodeError::TooLong(n) => write!(f, "code of {n} bytes exceeds {MAX_CODE_LEN}"),
            CodeError::UnknownOpcode { byte, offset } => write!(f, "unknown opcode {byte:#04x} at {offset}"),
            CodeError::TruncatedImmediate { offset } => write!(f, "truncated immediate at {offset}"),
            CodeError::BadJumpTarget { offset, target } => {
                write!(f, "jump at {offset} targets {target}, not an instruction boundary")
            }
        }
    }
}

/// Decodes contract bytecode and resolves jump targets to instruction
/// indices. Every target must be the offset of an instruction.
pub fn decode(code: &[u8]) -> Result<Vec<Instr>, CodeError> {
    if code.len() > MAX_CODE_LEN {
        return Err(CodeError::TooLong(code.len()));
    }
    let mut out = Vec::new();
    let mut starts = BTreeMap::new();
    let mut pc = 0;
    while pc < code.len() {
        let op = VmOp::from_byte(code[pc]).ok_or(CodeError::UnknownOpcode { byte: code[pc], offset: pc })?;
        let n = op.immediate_len();
        let imm_bytes = code.get(pc + 1..pc + 1 + n).ok_or(CodeError::TruncatedImmediate { offset: pc })?;
        let imm = match op {
            VmOp::PushI => Imm::Int(u64::from_le_bytes(imm_bytes.try_into().unwrap())),
            VmOp::PushA => Imm::Index(imm_bytes[0]),
            VmOp::PushAddr => Imm::Addr(Address(imm_bytes.try_into().unwrap())),
            // raw byte offset for now, resolved below
            VmOp::Jump | VmOp::JumpI => Imm::Target(u16::from_le_bytes(imm_bytes.try_into().unwrap()) as usize),
            _ => Imm::None,
        };
        starts.insert(pc, out.len());
        out.push(Instr { op, imm, offset: pc });
        pc += 1 + n;
    }
    for ins in &mut out {
        if let Imm::Target(target) = ins.imm {
            let idx = *starts
                .get(&target)
                .ok_or(CodeError::BadJumpTarget { offset: ins.offset, target })?;
            ins.imm = Imm::Target(idx);
        }
    }
    Ok(out)
}

pub fn encode(instrs: &[Instr]) -> Vec<u8> {
    let offsets: Vec<usize> = instrs.iter().map(|i| i.offset).collect();
    let mut out = Vec::new();
    for ins in instrs {
        out.push(ins.op as u8);
        match ins.imm {
            Imm::None => {}
            Imm::Int(v) => out.extend_from_slice(&v.to_le_bytes()),
            Imm::Index(i) => out.push(i),
            Imm::Addr(a) => out.extend_from_slice(&a.0),
            Imm::Target(idx) => out.extend_from_slice(&(offsets[idx] as u16).to_le_bytes()),
        }
    }
    out
}

/// Sum of opcode costs along a straight-line program, ignoring jumps.
pub fn static_gas(instrs: &[Instr]) -> u64 {
    instrs.iter().map(|i| gas_cost(i.op)).sum()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractAccount {
    pub code: Vec<u8>,
    pub storage: BTreeMap<u64, u64>,
    pub balance: Amount,
    /// Maximal footprint declared at deploy time.
    pub footprint: AccessDecl,
}

impl ContractAccount {
    pub fn code_hash(&self) -> [u8; 32] {
        crypto::sha256(&self.code)
    }
}

/// Account-model state: externally owned balances, contracts, and nonces.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AccountState {
    pub balances: BTreeMap<Address, Amount>,
    pub contracts: BTreeMap<Address, ContractAccount>,
    pub nonces: BTreeMap<Address, u64>,
}

impl AccountState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Balance of an externally owned account or a contract.
    pub fn balance(&self, a: &Address) -> Amount {
        match self.contracts.get(a) {
            Some(c) => c.balance,
            None => self.balances.get(a).copied().unwrap_or_default(),
        }
    }

    pub fn set_balance(&mut self, a: Address, v: Amount) {
        match self.contracts.get_mut(&a) {
            Some(c) => c.balance = v,
            None if v == Amount::ZERO => {
                self.balances.remove(&a);
            }
            None => {
                self.balances.insert(a, v);
            }
        }
    }

    pub fn nonce(&self, a: &Address) -> u64 {
        self.nonces.get(a).copied().unwrap_or(0)
    }

    pub fn storage(&self, contract: &Address, key: u64) -> u64 {
        self.contracts
            .get(contract)
            .and_then(|c| c.storage.get(&key).copied())
            .unwrap_or(0)
    }

    /// Σ balances over accounts and contracts.
    pub fn total(&self) -> Option<Amount> {
        Amount::checked_sum(
            self.balances
                .values()
                .copied()
                .chain(self.contracts.values().map(|c| c.balance)),
        )
    }

    /// Credits `amount` to `a`. Returns `None` on overflow.
    pub fn credit(&mut self, a: Address, amount: Amount) -> Option<()> {
        let v = self.balance(&a).checked_add(amount)?;
        self.set_balance(a, v);
        Some(())
    }

    /// Debits `amount` from `a`. Returns `None` when the balance is short.
    pub fn debit(&mut self, a: Address, amount: Amount) -> Option<()> {
        let v = self.balance(&a).checked_sub(amount)?;
        self.set_balance(a, v);
        Some(())
    }
}
