use alloc::vec::Vec;

use super::{decode, Instruction, Opcode, ScriptError, MAX_ELEMENT, MAX_STACK, MAX_STEPS};
use crate::crypto::{self, MAX_MULTISIG_KEYS};
use crate::model::{Epoch, MAX_WITNESS_ITEMS};

/// Read-only view of the spending transaction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScriptContext {
    /// Signing message for the input being validated.
    pub message: [u8; 32],
    pub not_before: Option<Epoch>,
    /// Lock hashes of every output created by the spending transaction.
    pub output_hashes: Vec<[u8; 32]>,
    pub covenants: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScriptFailure {
    EmptyScript,
    StackUnderflow,
    StepLimit,
    StackLimit,
    VerifyFailed,
    ReturnHit,
    BadPush,
    UnbalancedIf,
    TypeError,
    BadOpcode,
}

impl ScriptFailure {
    /// Stable reason code; receipts report `200 + code`.
    pub fn code(self) -> u16 {
        match self {
            ScriptFailure::EmptyScript => 1,
            ScriptFailure::StackUnderflow => 2,
            ScriptFailure::StepLimit => 3,
            ScriptFailure::StackLimit => 4,
            ScriptFailure::VerifyFailed => 5,
            ScriptFailure::ReturnHit => 6,
            ScriptFailure::BadPush => 7,
            ScriptFailure::UnbalancedIf => 8,
            ScriptFailure::TypeError => 9,
            ScriptFailure::BadOpcode => 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Success,
    Failure(ScriptFailure),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ScriptResult {
    pub outcome: Outcome,
    pub steps: u32,
}

impl ScriptResult {
    pub fn is_success(&self) -> bool {
        self.outcome == Outcome::Success
    }
}

fn truthy(el: &[u8]) -> bool {
    el.iter().any(|b| *b != 0)
}

/// Little-endian unsigned integer of at most 8 bytes.
fn as_int(el: &[u8]) -> Result<u64, ScriptFailure> {
    if el.len() > 8 {
        return Err(ScriptFailure::TypeError);
    }
    let mut buf = [0u8; 8];
    buf[..el.len()].copy_from_slice(el);
    Ok(u64::from_le_bytes(buf))
}

impl From<ScriptError> for ScriptFailure {
    fn from(e: ScriptError) -> Self {
        match e {
            ScriptError::Unbalanced => ScriptFailure::UnbalancedIf,
            ScriptError::TruncatedPush { .. } | ScriptError::EmptyPush | ScriptError::PushTooLong(_) => {
                ScriptFailure::BadPush
            }
            _ => ScriptFailure::BadOpcode,
        }
    }
}

struct Machine<'a> {
    stack: Vec<Vec<u8>>,
    ctx: &'a ScriptContext,
}

impl Machine<'_> {
    fn pop(&mut self) -> Result<Vec<u8>, ScriptFailure> {
        self.stack.pop().ok_or(ScriptFailure::StackUnderflow)
    }

    fn push(&mut self, el: Vec<u8>) -> Result<(), ScriptFailure> {
        if el.len() > MAX_ELEMENT {
            return Err(ScriptFailure::StackLimit);
        }
        self.stack.push(el);
        if self.stack.len() > MAX_STACK {
            return Err(ScriptFailure::StackLimit);
        }
        Ok(())
    }

    fn push_bool(&mut self, v: bool) -> Result<(), ScriptFailure> {
        self.push(if v { alloc::vec![1] } else { Vec::new() })
    }

    fn pop_n(&mut self, n: usize) -> Result<Vec<Vec<u8>>, ScriptFailure> {
        if self.stack.len() < n {
            return Err(ScriptFailure::StackUnderflow);
        }
        // returned in push order, deepest first
        Ok(self.stack.split_off(self.stack.len() - n))
    }

    fn step(&mut self, op: Opcode) -> Result<(), ScriptFailure> {
        match op {
            Opcode::False => self.push(Vec::new()),
            Opcode::True => self.push_bool(true),
            Opcode::If | Opcode::Else | Opcode::EndIf => unreachable!("handled by the caller"),
            Opcode::Verify => {
                if truthy(&self.pop()?) {
                    Ok(())
                } else {
                    Err(ScriptFailure::VerifyFailed)
                }
            }
            Opcode::Return => Err(ScriptFailure::ReturnHit),
            Opcode::Drop => self.pop().map(drop),
            Opcode::Dup => {
                let top = self.stack.last().ok_or(ScriptFailure::StackUnderflow)?.clone();
                self.push(top)
            }
            Opcode::Swap => {
                let n = self.stack.len();
                if n < 2 {
                    return Err(ScriptFailure::StackUnderflow);
                }
                self.stack.swap(n - 1, n - 2);
                Ok(())
            }
            Opcode::Equal | Opcode::EqualVerify => {
                let b = self.pop()?;
                let a = self.pop()?;
                match (op, a == b) {
                    (Opcode::Equal, eq) => self.push_bool(eq),
                    (_, true) => Ok(()),
                    (_, false) => Err(ScriptFailure::VerifyFailed),
                }
            }
            Opcode::Sha256 => {
                let v = self.pop()?;
                self.push(crypto::sha256(&v).to_vec())
            }
            Opcode::CheckSig | Opcode::CheckSigVerify => {
                let pk = self.pop()?;
                let sig = self.pop()?;
                let ok = crypto::verify(&pk, &self.ctx.message, &sig);
                match (op, ok) {
                    (Opcode::CheckSig, ok) => self.push_bool(ok),
                    (_, true) => Ok(()),
                    (_, false) => Err(ScriptFailure::VerifyFailed),
                }
            }
            Opcode::CheckMultiSig => {
                let n = as_int(&self.pop()?)? as usize;
                if n > MAX_MULTISIG_KEYS {
                    return Err(ScriptFailure::TypeError);
                }
                let keys = self.pop_n(n)?;
                let m = as_int(&self.pop()?)? as usize;
                if m > n {
                    return Err(ScriptFailure::TypeError);
                }
                let sigs = self.pop_n(m)?;
                let ok = crypto::check_multisig(m, &keys, &sigs, &self.ctx.message);
                self.push_bool(ok)
            }
            Opcode::CheckLockTime => {
                let t = self.pop()?;
                let t = <[u8; 8]>::try_from(t.as_slice()).map_err(|_| ScriptFailure::TypeError)?;
                match self.ctx.not_before {
                    Some(nb) if nb.0 >= u64::from_le_bytes(t) => Ok(()),
                    _ => Err(ScriptFailure::VerifyFailed),
                }
            }
            Opcode::Covenant => {
                let k = as_int(&self.pop()?)?;
                if k > self.stack.len() as u64 {
                    return Err(ScriptFailure::StackUnderflow);
                }
                let allowed = self.pop_n(k as usize)?;
                if allowed.iter().any(|h| h.len() != 32) {
                    return Err(ScriptFailure::TypeError);
                }
                let ok = self
                    .ctx
                    .output_hashes
                    .iter()
                    .all(|h| allowed.iter().any(|a| a.as_slice() == h));
                if ok {
                    Ok(())
                } else {
                    Err(ScriptFailure::VerifyFailed)
                }
            }
        }
    }
}

/// Runs `bytecode` against a witness stack (first element deepest).
///
/// Succeeds iff decoding succeeds, no opcode fails, and the final top of
/// stack is truthy (non-empty with a non-zero byte). Every visited opcode,
/// including those in skipped branches, costs one step.
pub fn execute(bytecode: &[u8], witness: &[Vec<u8>], ctx: &ScriptContext) -> ScriptResult {
    let mut steps = 0;
    let outcome = match run(bytecode, witness, ctx, &mut steps) {
        Ok(()) => Outcome::Success,
        Err(f) => Outcome::Failure(f),
    };
    ScriptResult { outcome, steps }
}

fn run(bytecode: &[u8], witness: &[Vec<u8>], ctx: &ScriptContext, steps: &mut u32) -> Result<(), ScriptFailure> {
    if bytecode.is_empty() {
        return Err(ScriptFailure::EmptyScript);
    }
    if witness.len() > MAX_WITNESS_ITEMS {
        return Err(ScriptFailure::StackLimit);
    }
    let program = decode(bytecode, ctx.covenants)?;
    let mut m = Machine { stack: Vec::with_capacity(witness.len() + 8), ctx };
    for el in witness {
        m.push(el.clone())?;
    }
    let mut exec: Vec<bool> = Vec::new();
    for ins in &program {
        *steps += 1;
        if *steps > MAX_STEPS {
            return Err(ScriptFailure::StepLimit);
        }
        let active = exec.iter().all(|b| *b);
        match ins {
            Instruction::Op(Opcode::If) => {
                let cond = if active { truthy(&m.pop()?) } else { false };
                exec.push(cond);
            }
            Instruction::Op(Opcode::Else) => {
                let top = exec.last_mut().ok_or(ScriptFailure::UnbalancedIf)?;
                *top = !*top;
            }
            Instruction::Op(Opcode::EndIf) => {
                exec.pop().ok_or(ScriptFailure::UnbalancedIf)?;
            }
            _ if !active => {}
            Instruction::Push(data) => m.push(data.clone())?,
            Instruction::Op(op) => m.step(*op)?,
        }
    }
    match m.stack.last() {
        None => Err(ScriptFailure::StackUnderflow),
        Some(top) if truthy(top) => Ok(()),
        Some(_) => Err(ScriptFailure::VerifyFailed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;
    use crate::script::assemble;
    use alloc::format;
    use alloc::vec;

    fn ctx() -> ScriptContext {
        ScriptContext { message: [5; 32], not_before: None, output_hashes: vec![], covenants: true }
    }

    fn hex(b: &[u8]) -> alloc::string::String {
        b.iter().map(|x| format!("{x:02x}")).collect()
    }

    #[test]
    fn pay_to_pubkey() {
        let k = keygen(&[1; 32]);
        let code = assemble(&format!("0x{} CHECKSIG", hex(&k.public().0))).unwrap();
        let c = ctx();
        let sig = k.sign(&c.message);
        let res = execute(&code, &[sig.0.to_vec()], &c);
        // witness push is not an opcode; PUSH(pk) and CHECKSIG are two steps
        assert_eq!(res, ScriptResult { outcome: Outcome::Success, steps: 2 });
        let bad = execute(&code, &[vec![0; 64]], &c);
        assert_eq!(bad.outcome, Outcome::Failure(ScriptFailure::VerifyFailed));
    }

    #[test]
    fn empty_script_fails_closed() {
        assert_eq!(
            execute(&[], &[vec![1]], &ctx()).outcome,
            Outcome::Failure(ScriptFailure::EmptyScript)
        );
    }

    #[test]
    fn locktime() {
        let code = assemble(&format!("0x{} CHECKLOCKTIME TRUE", hex(&10u64.to_le_bytes()))).unwrap();
        let mut c = ctx();
        assert_eq!(execute(&code, &[], &c).outcome, Outcome::Failure(ScriptFailure::VerifyFailed));
        c.not_before = Some(Epoch(9));
        assert_eq!(execute(&code, &[], &c).outcome, Outcome::Failure(ScriptFailure::VerifyFailed));
        c.not_before = Some(Epoch(10));
        assert_eq!(execute(&code, &[], &c).outcome, Outcome::Success);
        let short = assemble("0x0a CHECKLOCKTIME TRUE").unwrap();
        assert_eq!(execute(&short, &[], &c).outcome, Outcome::Failure(ScriptFailure::TypeError));
    }

    #[test]
    fn covenant_restricts_outputs() {
        let allowed = [3u8; 32];
        let code = assemble(&format!("0x{} 0x01 COVENANT TRUE", hex(&allowed))).unwrap();
        let mut c = ctx();
        c.output_hashes = vec![allowed];
        assert_eq!(execute(&code, &[], &c).outcome, Outcome::Success);
        c.output_hashes = vec![allowed, [4; 32]];
        assert_eq!(execute(&code, &[], &c).outcome, Outcome::Failure(ScriptFailure::VerifyFailed));
        c.covenants = false;
        assert_eq!(execute(&code, &[], &c).outcome, Outcome::Failure(ScriptFailure::BadOpcode));
    }

    #[test]
    fn branches() {
        let code = assemble("IF 0x02 ELSE 0x03 ENDIF 0x03 EQUAL").unwrap();
        assert_eq!(execute(&code, &[vec![]], &ctx()).outcome, Outcome::Success);
        assert_eq!(
            execute(&code, &[vec![1]], &ctx()).outcome,
            Outcome::Failure(ScriptFailure::VerifyFailed)
        );
        // skipped branch ops still count as steps: IF, push, ELSE, push(skipped) ..
        assert_eq!(execute(&code, &[vec![1]], &ctx()).steps, 7);
    }

    #[test]
    fn truthiness() {
        let code = assemble("VERIFY TRUE").unwrap();
        assert_eq!(
            execute(&code, &[vec![0, 0]], &ctx()).outcome,
            Outcome::Failure(ScriptFailure::VerifyFailed)
        );
        assert_eq!(execute(&code, &[vec![0, 1]], &ctx()).outcome, Outcome::Success);
    }

    #[test]
    fn return_and_underflow() {
        assert_eq!(
            execute(&assemble("RETURN").unwrap(), &[], &ctx()).outcome,
            Outcome::Failure(ScriptFailure::ReturnHit)
        );
        assert_eq!(
            execute(&assemble("DROP").unwrap(), &[], &ctx()).outcome,
            Outcome::Failure(ScriptFailure::StackUnderflow)
        );
    }

    #[test]
    fn stack_limit() {
        let code = vec![0x76; 300];
        assert_eq!(
            execute(&code, &[vec![1]], &ctx()).outcome,
            Outcome::Failure(ScriptFailure::StackLimit)
        );
    }

    #[test]
    fn multisig_opcode() {
        let ks: Vec<_> = (1..=3u8).map(|i| keygen(&[i; 32])).collect();
        let c = ctx();
        let code = assemble(&format!(
            "0x02 0x{} 0x{} 0x{} 0x03 CHECKMULTISIG",
            hex(&ks[0].public().0),
            hex(&ks[1].public().0),
            hex(&ks[2].public().0)
        ))
        .unwrap();
        // signatures in key order sit below m, which the script pushes
        let w = vec![ks[0].sign(&c.message).0.to_vec(), ks[2].sign(&c.message).0.to_vec()];
        let res = execute(&code, &w, &c);
        assert_eq!(res.outcome, Outcome::Success);
        let w_bad = vec![ks[2].sign(&c.message).0.to_vec(), ks[0].sign(&c.message).0.to_vec()];
        assert_eq!(execute(&code, &w_bad, &c).outcome, Outcome::Failure(ScriptFailure::VerifyFailed));
    }
}
