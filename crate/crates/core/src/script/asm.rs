//! Text form: whitespace-separated mnemonics, data pushes as `0x<hex>`.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{decode, encode, Instruction, Opcode, ScriptError, MAX_PUSH};

pub fn assemble(text: &str) -> Result<Vec<u8>, ScriptError> {
    let mut instructions = Vec::new();
    for token in text.split_whitespace() {
        let ins = if let Some(hex_digits) = token.strip_prefix("0x").or_else(|| token.strip_prefix("0X")) {
            let data = parse_hex(hex_digits).ok_or_else(|| ScriptError::BadHex(token.to_string()))?;
            if data.is_empty() {
                return Err(ScriptError::EmptyPush);
            }
            if data.len() > MAX_PUSH {
                return Err(ScriptError::PushTooLong(data.len()));
            }
            Instruction::Push(data)
        } else {
            Instruction::Op(
                Opcode::from_mnemonic(token).ok_or_else(|| ScriptError::UnknownMnemonic(token.to_string()))?,
            )
        };
        instructions.push(ins);
    }
    let bytecode = encode(&instructions);
    // re-decode for the balance and length checks
    decode(&bytecode, true)?;
    Ok(bytecode)
}

pub fn disassemble(bytecode: &[u8]) -> Result<String, ScriptError> {
    let instructions = decode(bytecode, true)?;
    let mut out = String::new();
    for (i, ins) in instructions.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        match ins {
            Instruction::Push(data) => {
                out.push_str("0x");
                for b in data {
                    out.push(HEX[(b >> 4) as usize] as char);
                    out.push(HEX[(b & 0xf) as usize] as char);
                }
            }
            Instruction::Op(op) => out.push_str(op.mnemonic()),
        }
    }
    Ok(out)
}

const HEX: &[u8; 16] = b"0123456789abcdef";

fn parse_hex(s: &str) -> Option<Vec<u8>> {
    if s.len() % 2 != 0 {
        return None;
    }
    let nibble = |c: u8| (c as char).to_digit(16).map(|d| d as u8);
    s.as_bytes()
        .chunks(2)
        .map(|pair| Some(nibble(pair[0])? << 4 | nibble(pair[1])?))
        .collect()
}
