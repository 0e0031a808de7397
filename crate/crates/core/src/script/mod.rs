//! Output scripts: a small predicate language over a byte stack, with
//! timelock and (config-gated) covenant opcodes.
//!
//! | byte        | mnemonic        |
//! |-------------|-----------------|
//! | 0x00        | FALSE           |
//! | 0x01..=0x4b | push N bytes    |
//! | 0x51        | TRUE            |
//! | 0x63        | IF              |
//! | 0x67        | ELSE            |
//! | 0x68        | ENDIF           |
//! | 0x69        | VERIFY          |
//! | 0x6a        | RETURN          |
//! | 0x75        | DROP            |
//! | 0x76        | DUP             |
//! | 0x7c        | SWAP            |
//! | 0x87        | EQUAL           |
//! | 0x88        | EQUALVERIFY     |
//! | 0xa8        | SHA256          |
//! | 0xac        | CHECKSIG        |
//! | 0xad        | CHECKSIGVERIFY  |
//! | 0xae        | CHECKMULTISIG   |
//! | 0xb1        | CHECKLOCKTIME   |
//! | 0xc0        | COVENANT        |

mod asm;
mod interp;

pub use asm::{assemble, disassemble};
pub use interp::{execute, Outcome, ScriptContext, ScriptFailure, ScriptResult};

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::model::MAX_SCRIPT_LEN;

pub const MAX_STEPS: u32 = 10_000;
pub const MAX_STACK: usize = 256;
pub const MAX_ELEMENT: usize = 256;
pub const MAX_PUSH: usize = 0x4b;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Opcode {
    False = 0x00,
    True = 0x51,
    If = 0x63,
    Else = 0x67,
    EndIf = 0x68,
    Verify = 0x69,
    Return = 0x6a,
    Drop = 0x75,
    Dup = 0x76,
    Swap = 0x7c,
    Equal = 0x87,
    EqualVerify = 0x88,
    Sha256 = 0xa8,
    CheckSig = 0xac,
    CheckSigVerify = 0xad,
    CheckMultiSig = 0xae,
    CheckLockTime = 0xb1,
    Covenant = 0xc0,
}

impl Opcode {
    pub const ALL: [Opcode; 18] = [
        Opcode::False,
        Opcode::True,
        Opcode::If,
        Opcode::Else,
        Opcode::EndIf,
        Opcode::Verify,
        Opcode::Return,
        Opcode::Drop,
        Opcode::Dup,
        Opcode::Swap,
        Opcode::Equal,
        Opcode::EqualVerify,
        Opcode::Sha256,
        Opcode::CheckSig,
        Opcode::CheckSigVerify,
        Opcode::CheckMultiSig,
        Opcode::CheckLockTime,
        Opcode::Covenant,
    ];

    pub fn from_byte(b: u8) -> Option<Opcode> {
        Opcode::ALL.into_iter().find(|op| *op as u8 == b)
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::False => "FALSE",
            Opcode::True => "TRUE",
            Opcode::If => "IF",
            Opcode::Else => "ELSE",
            Opcode::EndIf => "ENDIF",
            Opcode::Verify => "VERIFY",
            Opcode::Return => "RETURN",
            Opcode::Drop => "DROP",
            Opcode::Dup => "DUP",
            Opcode::Swap => "SWAP",
            Opcode::Equal => "EQUAL",
            Opcode::EqualVerify => "EQUALVERIFY",
            Opcode::Sha256 => "SHA256",
            Opcode::CheckSig => "CHECKSIG",
            Opcode::CheckSigVerify => "CHECKSIGVERIFY",
            Opcode::CheckMultiSig => "CHECKMULTISIG",
            Opcode::CheckLockTime => "CHECKLOCKTIME",
            Opcode::Covenant => "COVENANT",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        Opcode::ALL.into_iter().find(|op| op.mnemonic().eq_ignore_ascii_case(s))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Instruction {
    Push(Vec<u8>),
    Op(Opcode),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScriptError {
    UnknownMnemonic(String),
    BadHex(String),
    EmptyPush,
    PushTooLong(usize),
    Unbalanced,
    TruncatedPush { offset: usize },
    UnknownOpcode { byte: u8, offset: usize },
    CovenantDisabled { offset: usize },
    TooLong(usize),
}

impl fmt::Display for ScriptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptError::UnknownMnemonic(m) => write!(f, "unknown mnemonic `{m}`"),
            ScriptError::BadHex(t) => write!(f, "bad hex literal `{t}`"),
            ScriptError::EmptyPush => write!(f, "empty push literal (use FALSE)"),
            ScriptError::PushTooLong(n) => write!(f, "push of {n} bytes exceeds {MAX_PUSH}"),
            ScriptError::Unbalanced => write!(f, "unbalanced IF/ELSE/ENDIF"),
            ScriptError::TruncatedPush { offset } => write!(f, "truncated push at offset {offset}"),
            ScriptError::UnknownOpcode { byte, offset } => {
                write!(f, "unknown opcode {byte:#04x} at offset {offset}")
            }
            ScriptError::CovenantDisabled { offset } => {
                write!(f, "COVENANT at offset {offset} while covenants are disabled")
            }
            ScriptError::TooLong(n) => write!(f, "script of {n} bytes exceeds {MAX_SCRIPT_LEN}"),
        }
    }
}

/// Decodes bytecode into instructions, checking push bounds, opcode validity,
/// and IF/ELSE/ENDIF balance (at most one ELSE per IF).
pub fn decode(bytecode: &[u8], covenants: bool) -> Result<Vec<Instruction>, ScriptError> {
    if bytecode.len() > MAX_SCRIPT_LEN {
        return Err(ScriptError::TooLong(bytecode.len()));
    }
    let mut out = Vec::new();
    // one entry per open IF: whether its ELSE has been seen
    let mut open: Vec<bool> = Vec::new();
    let mut pc = 0;
    while pc < bytecode.len() {
        let b = bytecode[pc];
        if (0x01..=0x4b).contains(&b) {
            let end = pc + 1 + b as usize;
            if end > bytecode.len() {
                return Err(ScriptError::TruncatedPush { offset: pc });
            }
            out.push(Instruction::Push(bytecode[pc + 1..end].to_vec()));
            pc = end;
            continue;
        }
        let op = Opcode::from_byte(b).ok_or(ScriptError::UnknownOpcode { byte: b, offset: pc })?;
        match op {
            Opcode::Covenant if !covenants => return Err(ScriptError::CovenantDisabled { offset: pc }),
            Opcode::If => open.push(false),
            Opcode::Else => match open.last_mut() {
                Some(seen @ false) => *seen = true,
                _ => return Err(ScriptError::Unbalanced),
            },
            Opcode::EndIf => {
                open.pop().ok_or(ScriptError::Unbalanced)?;
            }
            _ => {}
        }
        out.push(Instruction::Op(op));
        pc += 1;
    }
    if !open.is_empty() {
        return Err(ScriptError::Unbalanced);
    }
    Ok(out)
}

pub fn encode(instructions: &[Instruction]) -> Vec<u8> {
    let mut out = Vec::new();
    for ins in instructions {
        match ins {
            Instruction::Push(data) => {
                out.push(data.len() as u8);
                out.extend_from_slice(data);
            }
            Instruction::Op(op) => out.push(*op as u8),
        }
    }
    out
}

/// Well-formed output-script bytecode.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ScriptProgram {
    bytecode: Vec<u8>,
}

impl ScriptProgram {
    pub fn new(bytecode: Vec<u8>, covenants: bool) -> Result<Self, ScriptError> {
        decode(&bytecode, covenants)?;
        Ok(ScriptProgram { bytecode })
    }

    pub fn bytecode(&self) -> &[u8] {
        &self.bytecode
    }

    pub fn into_bytecode(self) -> Vec<u8> {
        self.bytecode
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn decode_checks_balance() {
        assert!(decode(&[0x63, 0x68], false).is_ok());
        assert_eq!(decode(&[0x63, 0x67], false), Err(ScriptError::Unbalanced));
        assert_eq!(decode(&[0x68], false), Err(ScriptError::Unbalanced));
        assert_eq!(decode(&[0x63, 0x67, 0x67, 0x68], false), Err(ScriptError::Unbalanced));
    }

    #[test]
    fn truncated_push_and_unknown_byte() {
        assert_eq!(decode(&[0x02, 0xaa], false), Err(ScriptError::TruncatedPush { offset: 0 }));
        assert_eq!(
            decode(&[0x51, 0xff], false),
            Err(ScriptError::UnknownOpcode { byte: 0xff, offset: 1 })
        );
    }

    #[test]
    fn covenant_is_gated() {
        assert_eq!(decode(&[0xc0], false), Err(ScriptError::CovenantDisabled { offset: 0 }));
        assert_eq!(decode(&[0xc0], true), Ok(vec![Instruction::Op(Opcode::Covenant)]));
    }

    #[test]
    fn opcode_bytes_match_table() {
        for op in Opcode::ALL {
            assert_eq!(Opcode::from_byte(op as u8), Some(op));
            assert_eq!(Opcode::from_mnemonic(op.mnemonic()), Some(op));
        }
    }
}
