//! Contract assembly: one instruction per token group, `label:` definitions,
//! `;` comments. Operands: `PUSHI` decimal or `0x` hex, `PUSHA` table index,
//! `PUSHADDR` 64 hex digits or `@name`, jumps a label or a byte offset.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write};

use super::{decode, CodeError, Imm, VmOp};
use crate::model::{Address, MAX_CODE_LEN};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AsmError {
    UnknownMnemonic(String),
    MissingOperand(&'static str),
    BadOperand(String),
    UnknownName(String),
    UnknownLabel(String),
    DuplicateLabel(String),
    Code(CodeError),
}

impl fmt::Display for AsmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AsmError::UnknownMnemonic(m) => write!(f, "unknown mnemonic `{m}`"),
            AsmError::MissingOperand(m) => write!(f, "{m} needs an operand"),
            AsmError::BadOperand(t) => write!(f, "bad operand `{t}`"),
            AsmError::UnknownName(n) => write!(f, "unresolved address name `@{n}`"),
            AsmError::UnknownLabel(l) => write!(f, "undefined label `{l}`"),
            AsmError::DuplicateLabel(l) => write!(f, "label `{l}` defined twice"),
            AsmError::Code(e) => write!(f, "{e}"),
        }
    }
}

enum Operand<'a> {
    None,
    Int(u64),
    Index(u8),
    Addr(Address),
    Label(&'a str),
    Offset(u16),
}

/// Assembles contract source. `@name` operands of `PUSHADDR` are looked up
/// through `resolve`.
pub fn assemble(src: &str, resolve: impl Fn(&str) -> Option<Address>) -> Result<Vec<u8>, AsmError> {
    let mut items: Vec<(VmOp, Operand)> = Vec::new();
    let mut labels: BTreeMap<&str, usize> = BTreeMap::new();
    let mut offset = 0usize;
    let mut tokens = src.lines().flat_map(|l| l.split(';').next().unwrap_or("").split_whitespace());
    while let Some(tok) = tokens.next() {
        if let Some(label) = tok.strip_suffix(':') {
            if labels.insert(label, offset).is_some() {
                return Err(AsmError::DuplicateLabel(label.to_string()));
            }
            continue;
        }
        let op = VmOp::from_mnemonic(tok).ok_or_else(|| AsmError::UnknownMnemonic(tok.to_string()))?;
        let operand = if op.immediate_len() == 0 {
            Operand::None
        } else {
            let arg = tokens.next().ok_or(AsmError::MissingOperand(op.mnemonic()))?;
            let bad = || AsmError::BadOperand(arg.to_string());
            match op {
                VmOp::PushI => Operand::Int(parse_int(arg).ok_or_else(bad)?),
                VmOp::PushA => Operand::Index(arg.parse().map_err(|_| bad())?),
                VmOp::PushAddr => match arg.strip_prefix('@') {
                    Some(name) => Operand::Addr(resolve(name).ok_or_else(|| AsmError::UnknownName(name.to_string()))?),
                    None => {
                        let hex = arg.strip_prefix("0x").ok_or_else(bad)?;
                        let bytes = parse_hex(hex).ok_or_else(bad)?;
                        Operand::Addr(Address(bytes.try_into().map_err(|_| bad())?))
                    }
                },
                _ if arg.starts_with(|c: char| c.is_ascii_digit()) => Operand::Offset(arg.parse().map_err(|_| bad())?),
                _ => Operand::Label(arg),
            }
        };
        offset += 1 + op.immediate_len();
        items.push((op, operand));
    }
    if offset > MAX_CODE_LEN {
        return Err(AsmError::Code(CodeError::TooLong(offset)));
    }
    let mut out = Vec::with_capacity(offset);
    for (op, operand) in items {
        out.push(op as u8);
        match operand {
            Operand::None => {}
            Operand::Int(v) => out.extend_from_slice(&v.to_le_bytes()),
            Operand::Index(i) => out.push(i),
            Operand::Addr(a) => out.extend_from_slice(&a.0),
            Operand::Offset(o) => out.extend_from_slice(&o.to_le_bytes()),
            Operand::Label(l) => {
                let target = *labels.get(l).ok_or_else(|| AsmError::UnknownLabel(l.to_string()))?;
                out.extend_from_slice(&(target as u16).to_le_bytes());
            }
        }
    }
    decode(&out).map_err(AsmError::Code)?;
    Ok(out)
}

/// One instruction per line with numeric jump offsets.
pub fn disassemble(code: &[u8]) -> Result<String, CodeError> {
    let instrs = decode(code)?;
    let mut out = String::new();
    for ins in &instrs {
        out.push_str(ins.op.mnemonic());
        let _ = match ins.imm {
            Imm::None => Ok(()),
            Imm::Int(v) => write!(out, " {v}"),
            Imm::Index(i) => write!(out, " {i}"),
            Imm::Addr(a) => {
                out.push_str(" 0x");
                a.0.iter().try_for_each(|b| write!(out, "{b:02x}"))
            }
            Imm::Target(idx) => write!(out, " {}", instrs[idx].offset),
        };
        out.push('\n');
    }
    Ok(out)
}

fn parse_int(s: &str) -> Option<u64> {
    match s.strip_prefix("0x") {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

fn parse_hex(s: &str) -> Option<Vec<u8>> {
    if s.len() % 2 != 0 {
        return None;
    }
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok()).collect()
}
