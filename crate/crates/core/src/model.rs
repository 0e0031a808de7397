//! Core domain types, canonical serialization, transaction identity, and
//! programmability-level classification.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{self, PublicKey, Signature, MAX_MULTISIG_KEYS};
use crate::permission::Endorsement;

pub const MAX_SCRIPT_LEN: usize = 1024;
pub const MAX_CODE_LEN: usize = 4096;
pub const MAX_WITNESS_ITEMS: usize = 32;
pub const MAX_WITNESS_ITEM_LEN: usize = 256;
/// `PUSHA` takes a one-byte index.
pub const MAX_ADDRESS_TABLE: usize = 256;

/// Value in base currency units. All arithmetic is checked.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(transparent))]
pub struct Amount(pub u64);

impl Amount {
    pub const ZERO: Amount = Amount(0);

    pub fn get(self) -> u64 {
        self.0
    }

    pub fn checked_add(self, other: Amount) -> Option<Amount> {
        self.0.checked_add(other.0).map(Amount)
    }

    pub fn checked_sub(self, other: Amount) -> Option<Amount> {
        self.0.checked_sub(other.0).map(Amount)
    }

    pub fn checked_sum<I: IntoIterator<Item = Amount>>(items: I) -> Option<Amount> {
        items
            .into_iter()
            .try_fold(Amount::ZERO, |acc, a| acc.checked_add(a))
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Logical ledger time. Batches carry one epoch each.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(transparent))]
pub struct Epoch(pub u64);

impl fmt::Display for Epoch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Address(pub [u8; 32]);

impl Address {
    pub fn from_public_key(pk: &PublicKey) -> Self {
        Address(crypto::sha256(&pk.0))
    }

    pub fn from_script(bytecode: &[u8]) -> Self {
        Address(crypto::sha256(bytecode))
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Address(")?;
        crate::fmt_hex(f, &self.0[..6])?;
        write!(f, "..)")
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        crate::fmt_hex(f, &self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct TxId(pub [u8; 32]);

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxId(")?;
        crate::fmt_hex(f, &self.0[..6])?;
        write!(f, "..)")
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        crate::fmt_hex(f, &self.0)
    }
}

#[cfg(feature = "serde")]
crate::serde_hex::hex_newtype_serde!(Address, 32);
#[cfg(feature = "serde")]
crate::serde_hex::hex_newtype_serde!(TxId, 32);

/// Spending condition attached to an output.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Lock {
    PubKey(PublicKey),
    MultiSig { m: u8, keys: Vec<PublicKey> },
    Script(#[cfg_attr(feature = "serde", serde(with = "crate::serde_hex::bytes"))] Vec<u8>),
}

impl Lock {
    pub fn is_script(&self) -> bool {
        matches!(self, Lock::Script(_))
    }

    /// Public-key hash, script hash, or hash of the encoded multisig lock.
    /// Covenants and the allow-list rule both operate on this value.
    pub fn address(&self) -> Address {
        match self {
            Lock::PubKey(pk) => Address::from_public_key(pk),
            Lock::Script(code) => Address::from_script(code),
            Lock::MultiSig { .. } => {
                let mut w = Writer::new();
                self.encode(&mut w);
                Address(crypto::sha256(&w.into_bytes()))
            }
        }
    }

    pub fn check(&self) -> Result<(), StructureError> {
        match self {
            Lock::PubKey(_) => Ok(()),
            Lock::MultiSig { m, keys } => {
                let (m, n) = (*m as usize, keys.len());
                if m >= 1 && m <= n && n <= MAX_MULTISIG_KEYS {
                    Ok(())
                } else {
                    Err(StructureError::BadMultiSig)
                }
            }
            Lock::Script(code) if code.len() > MAX_SCRIPT_LEN => Err(StructureError::ScriptTooLong),
            Lock::Script(_) => Ok(()),
        }
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        match self {
            Lock::PubKey(pk) => {
                w.u8(0).raw(&pk.0);
            }
            Lock::MultiSig { m, keys } => {
                w.u8(1).u8(*m).list(keys, |w, k| {
                    w.raw(&k.0);
                });
            }
            Lock::Script(code) => {
                w.u8(2).bytes(code);
            }
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u8()? {
            0 => Ok(Lock::PubKey(PublicKey(r.array()?))),
            1 => {
                let m = r.u8()?;
                let keys = r.list(32, |r| Ok(PublicKey(r.array()?)))?;
                Ok(Lock::MultiSig { m, keys })
            }
            2 => Ok(Lock::Script(r.bytes()?)),
            tag => Err(DecodeError::BadTag { what: "lock", tag }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Output {
    pub amount: Amount,
    pub lock: Lock,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub expiry: Option<Epoch>,
}

impl Output {
    pub fn new(amount: u64, lock: Lock) -> Self {
        Output { amount: Amount(amount), lock, expiry: None }
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.u64(self.amount.0);
        self.lock.encode(w);
        w.option(self.expiry.as_ref(), |w, e| {
            w.u64(e.0);
        });
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Output {
            amount: Amount(r.u64()?),
            lock: Lock::decode(r)?,
            expiry: r.option(|r| r.u64().map(Epoch))?,
        })
    }
}

/// Reference to an output of an earlier transaction.
///
/// Ordering is lexicographic over the serialized form (txid bytes, then the
/// index as little-endian bytes), which is the order state digests use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Outpoint {
    pub txid: TxId,
    pub index: u32,
}

impl Outpoint {
    pub fn new(txid: TxId, index: u32) -> Self {
        Outpoint { txid, index }
    }

    pub fn to_bytes(&self) -> [u8; 36] {
        let mut out = [0u8; 36];
        out[..32].copy_from_slice(&self.txid.0);
        out[32..].copy_from_slice(&self.index.to_le_bytes());
        out
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Outpoint { txid: TxId(r.array()?), index: r.u32()? })
    }
}

impl Ord for Outpoint {
    fn cmp(&self, other: &Self) -> Ordering {
        self.txid
            .cmp(&other.txid)
            .then_with(|| self.index.to_le_bytes().cmp(&other.index.to_le_bytes()))
    }
}

impl PartialOrd for Outpoint {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Spent outpoint plus the witness stack that satisfies its lock.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Input {
    pub outpoint: Outpoint,
    #[cfg_attr(
        feature = "serde",
        serde(default, with = "crate::serde_hex::byte_list")
    )]
    pub witness: Vec<Vec<u8>>,
}

impl Input {
    pub fn new(outpoint: Outpoint) -> Self {
        Input { outpoint, witness: Vec::new() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Validity {
    #[cfg_attr(feature = "serde", serde(default))]
    pub not_before: Option<Epoch>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub not_after: Option<Epoch>,
}

impl Validity {
    pub fn contains(&self, epoch: Epoch) -> bool {
        self.not_before.map_or(true, |nb| epoch >= nb) && self.not_after.map_or(true, |na| epoch <= na)
    }

    /// True when the window has not opened yet at `epoch`.
    pub fn is_premature(&self, epoch: Epoch) -> bool {
        self.not_before.is_some_and(|nb| epoch < nb)
    }
}

/// Pre-declared state footprint of a contract call (or a contract's maximal
/// footprint, recorded at deploy).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct AccessDecl {
    #[cfg_attr(feature = "serde", serde(default))]
    pub balances_read: BTreeSet<Address>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub balances_written: BTreeSet<Address>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub storage_read: BTreeSet<(Address, u64)>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub storage_written: BTreeSet<(Address, u64)>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub callees: BTreeSet<Address>,
}

impl AccessDecl {
    pub fn is_empty(&self) -> bool {
        self.balances_read.is_empty()
            && self.balances_written.is_empty()
            && self.storage_read.is_empty()
            && self.storage_written.is_empty()
            && self.callees.is_empty()
    }

    pub fn can_read_balance(&self, a: &Address) -> bool {
        self.balances_read.contains(a) || self.balances_written.contains(a)
    }

    pub fn can_read_storage(&self, slot: &(Address, u64)) -> bool {
        self.storage_read.contains(slot) || self.storage_written.contains(slot)
    }

    /// Component-wise containment: every read of `self` is readable in
    /// `other` and every write of `self` is writable in `other`.
    pub fn is_within(&self, other: &AccessDecl) -> bool {
        self.balances_read.iter().all(|a| other.can_read_balance(a))
            && self.balances_written.is_subset(&other.balances_written)
            && self.storage_read.iter().all(|s| other.can_read_storage(s))
            && self.storage_written.is_subset(&other.storage_written)
            && self.callees.is_subset(&other.callees)
    }

    pub fn merge(&mut self, other: &AccessDecl) {
        self.balances_read.extend(other.balances_read.iter().copied());
        self.balances_written.extend(other.balances_written.iter().copied());
        self.storage_read.extend(other.storage_read.iter().copied());
        self.storage_written.extend(other.storage_written.iter().copied());
        self.callees.extend(other.callees.iter().copied());
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        let addr = |w: &mut Writer, a: &Address| {
            w.raw(&a.0);
        };
        let slot = |w: &mut Writer, s: &(Address, u64)| {
            w.raw(&s.0 .0).u64(s.1);
        };
        w.set(&self.balances_read, addr);
        w.set(&self.balances_written, addr);
        w.set(&self.storage_read, slot);
        w.set(&self.storage_written, slot);
        w.set(&self.callees, addr);
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let addr = |r: &mut Reader<'_>| Ok(Address(r.array()?));
        let slot = |r: &mut Reader<'_>| Ok((Address(r.array()?), r.u64()?));
        Ok(AccessDecl {
            balances_read: r.set(32, "balance set", addr)?,
            balances_written: r.set(32, "balance set", addr)?,
            storage_read: r.set(40, "storage set", slot)?,
            storage_written: r.set(40, "storage set", slot)?,
            callees: r.set(32, "callee set", addr)?,
        })
    }
}

/// Movement of value between the UTXO set and account balances.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum MoveDirection {
    /// Spend outputs and credit `account` with the inputs minus `change`.
    ToAccount {
        inputs: Vec<Input>,
        account: Address,
        #[cfg_attr(feature = "serde", serde(default))]
        change: Vec<Output>,
    },
    /// Debit the account of `owner` and create `outputs`.
    ToUtxo { owner: PublicKey, outputs: Vec<Output> },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum TxKind {
    UtxoSpend {
        inputs: Vec<Input>,
        outputs: Vec<Output>,
    },
    Deploy {
        #[cfg_attr(feature = "serde", serde(with = "crate::serde_hex::bytes"))]
        code: Vec<u8>,
        endowment: Amount,
        payer: PublicKey,
        gas_limit: u64,
        gas_price: u64,
        /// Maximal footprint of the contract, consulted when it is called
        /// from a declared-access transaction.
        #[cfg_attr(feature = "serde", serde(default))]
        footprint: AccessDecl,
    },
    Call {
        contract: Address,
        arg: u64,
        attached: Amount,
        caller: PublicKey,
        gas_limit: u64,
        gas_price: u64,
        /// Address constants for `PUSHA`.
        #[cfg_attr(feature = "serde", serde(default))]
        addresses: Vec<Address>,
        #[cfg_attr(feature = "serde", serde(default))]
        access: Option<AccessDecl>,
    },
    Move(MoveDirection),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Transaction {
    pub kind: TxKind,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub validity: Option<Validity>,
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub endorsement: Option<Endorsement>,
    /// Account signature for `Deploy`, `Call` and `Move::ToUtxo`. Like input
    /// witnesses it is excluded from the txid.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub signature: Option<Signature>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub nonce: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[allow(non_camel_case_types)]
pub enum Level {
    L1,
    #[cfg_attr(feature = "serde", serde(rename = "L1.5"))]
    L1_5,
    L2,
    L3,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::L1, Level::L1_5, Level::L2, Level::L3];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::L1 => "L1",
            Level::L1_5 => "L1.5",
            Level::L2 => "L2",
            Level::L3 => "L3",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Level> {
        Level::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Level {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Level::ALL.into_iter().find(|l| l.as_str() == s).ok_or(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StructureError {
    NoInputs,
    NoOutputs,
    ZeroAmount,
    BadMultiSig,
    ScriptTooLong,
    CodeTooLong,
    EmptyValidity,
    InvertedValidity,
    WitnessTooLarge,
    AddressTableTooLarge,
    DuplicateInput,
}

impl fmt::Display for StructureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

fn encode_inputs(w: &mut Writer, inputs: &[Input], with_witness: bool) {
    w.list(inputs, |w, input| {
        w.raw(&input.outpoint.to_bytes());
        if with_witness {
            w.list(&input.witness, |w, item| {
                w.bytes(item);
            });
        }
    });
}

fn decode_inputs(r: &mut Reader<'_>, with_witness: bool) -> Result<Vec<Input>, DecodeError> {
    r.list(36, |r| {
        let outpoint = Outpoint::decode(r)?;
        let witness = if with_witness { r.list(4, |r| r.bytes())? } else { Vec::new() };
        Ok(Input { outpoint, witness })
    })
}

fn encode_outputs(w: &mut Writer, outputs: &[Output]) {
    w.list(outputs, |w, o| o.encode(w));
}

fn decode_outputs(r: &mut Reader<'_>) -> Result<Vec<Output>, DecodeError> {
    r.list(14, Output::decode)
}

fn check_outputs(outputs: &[Output]) -> Result<(), StructureError> {
    for o in outputs {
        if o.amount == Amount::ZERO {
            return Err(StructureError::ZeroAmount);
        }
        o.lock.check()?;
    }
    Ok(())
}

fn check_inputs(inputs: &[Input]) -> Result<(), StructureError> {
    if inputs.is_empty() {
        return Err(StructureError::NoInputs);
    }
    let mut seen = BTreeSet::new();
    for input in inputs {
        if !seen.insert(input.outpoint) {
            return Err(StructureError::DuplicateInput);
        }
        if input.witness.len() > MAX_WITNESS_ITEMS
            || input.witness.iter().any(|w| w.len() > MAX_WITNESS_ITEM_LEN)
        {
            return Err(StructureError::WitnessTooLarge);
        }
    }
    Ok(())
}

impl Transaction {
    pub fn new(kind: TxKind) -> Self {
        Transaction { kind, validity: None, endorsement: None, signature: None, nonce: 0 }
    }

    fn encode(&self, w: &mut Writer, with_witness: bool) {
        match &self.kind {
            TxKind::UtxoSpend { inputs, outputs } => {
                w.u8(0);
                encode_inputs(w, inputs, with_witness);
                encode_outputs(w, outputs);
            }
            TxKind::Deploy { code, endowment, payer, gas_limit, gas_price, footprint } => {
                w.u8(1).bytes(code).u64(endowment.0).raw(&payer.0).u64(*gas_limit).u64(*gas_price);
                footprint.encode(w);
            }
            TxKind::Call { contract, arg, attached, caller, gas_limit, gas_price, addresses, access } => {
                w.u8(2)
                    .raw(&contract.0)
                    .u64(*arg)
                    .u64(attached.0)
                    .raw(&caller.0)
                    .u64(*gas_limit)
                    .u64(*gas_price)
                    .list(addresses, |w, a| {
                        w.raw(&a.0);
                    })
                    .option(access.as_ref(), |w, a| a.encode(w));
            }
            TxKind::Move(MoveDirection::ToAccount { inputs, account, change }) => {
                w.u8(3).u8(0);
                encode_inputs(w, inputs, with_witness);
                w.raw(&account.0);
                encode_outputs(w, change);
            }
            TxKind::Move(MoveDirection::ToUtxo { owner, outputs }) => {
                w.u8(3).u8(1).raw(&owner.0);
                encode_outputs(w, outputs);
            }
        }
        w.option(self.validity.as_ref(), |w, v| {
            w.option(v.not_before.as_ref(), |w, e| {
                w.u64(e.0);
            });
            w.option(v.not_after.as_ref(), |w, e| {
                w.u64(e.0);
            });
        });
        if with_witness {
            w.option(self.endorsement.as_ref(), |w, e| e.encode(w));
            w.option(self.signature.as_ref(), |w, s| {
                w.raw(&s.0);
            });
        }
        w.u64(self.nonce);
    }

    fn decode(r: &mut Reader<'_>, with_witness: bool) -> Result<Self, DecodeError> {
        let kind = match r.u8()? {
            0 => TxKind::UtxoSpend {
                inputs: decode_inputs(r, with_witness)?,
                outputs: decode_outputs(r)?,
            },
            1 => TxKind::Deploy {
                code: r.bytes()?,
                endowment: Amount(r.u64()?),
                payer: PublicKey(r.array()?),
                gas_limit: r.u64()?,
                gas_price: r.u64()?,
                footprint: AccessDecl::decode(r)?,
            },
            2 => TxKind::Call {
                contract: Address(r.array()?),
                arg: r.u64()?,
                attached: Amount(r.u64()?),
                caller: PublicKey(r.array()?),
                gas_limit: r.u64()?,
                gas_price: r.u64()?,
                addresses: r.list(32, |r| Ok(Address(r.array()?)))?,
                access: r.option(AccessDecl::decode)?,
            },
            3 => match r.u8()? {
                0 => TxKind::Move(MoveDirection::ToAccount {
                    inputs: decode_inputs(r, with_witness)?,
                    account: Address(r.array()?),
                    change: decode_outputs(r)?,
                }),
                1 => TxKind::Move(MoveDirection::ToUtxo {
                    owner: PublicKey(r.array()?),
                    outputs: decode_outputs(r)?,
                }),
                tag => return Err(DecodeError::BadTag { what: "move direction", tag }),
            },
            tag => return Err(DecodeError::BadTag { what: "transaction kind", tag }),
        };
        let validity = r.option(|r| {
            Ok(Validity {
                not_before: r.option(|r| r.u64().map(Epoch))?,
                not_after: r.option(|r| r.u64().map(Epoch))?,
            })
        })?;
        let (endorsement, signature) = if with_witness {
            (
                r.option(Endorsement::decode)?,
                r.option(|r| Ok(Signature(r.array()?)))?,
            )
        } else {
            (None, None)
        };
        let nonce = r.u64()?;
        Ok(Transaction { kind, validity, endorsement, signature, nonce })
    }

    /// Canonical bytes without witnesses, endorsement, or account signature.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w, false);
        w.into_bytes()
    }

    /// Full encoding including every witness field.
    pub fn full_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w, true);
        w.into_bytes()
    }

    pub(crate) fn encode_full(&self, w: &mut Writer) {
        self.encode(w, true);
    }

    pub(crate) fn decode_full_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Self::decode(r, true)
    }

    pub fn decode_canonical(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let tx = Self::decode(&mut r, false)?;
        r.finish()?;
        Ok(tx)
    }

    pub fn decode_full(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let tx = Self::decode(&mut r, true)?;
        r.finish()?;
        Ok(tx)
    }

    pub fn txid(&self) -> TxId {
        TxId(crypto::sha256(&self.canonical_bytes()))
    }

    /// Copy with every witness-class field cleared.
    pub fn without_witnesses(&self) -> Transaction {
        let mut tx = self.clone();
        tx.endorsement = None;
        tx.signature = None;
        if let Some(inputs) = tx.inputs_mut() {
            for input in inputs {
                input.witness.clear();
            }
        }
        tx
    }

    pub fn inputs(&self) -> &[Input] {
        match &self.kind {
            TxKind::UtxoSpend { inputs, .. }
            | TxKind::Move(MoveDirection::ToAccount { inputs, .. }) => inputs,
            _ => &[],
        }
    }

    pub fn inputs_mut(&mut self) -> Option<&mut Vec<Input>> {
        match &mut self.kind {
            TxKind::UtxoSpend { inputs, .. }
            | TxKind::Move(MoveDirection::ToAccount { inputs, .. }) => Some(inputs),
            _ => None,
        }
    }

    /// Outputs this transaction inserts into the UTXO set.
    pub fn created_outputs(&self) -> &[Output] {
        match &self.kind {
            TxKind::UtxoSpend { outputs, .. }
            | TxKind::Move(MoveDirection::ToUtxo { outputs, .. }) => outputs,
            TxKind::Move(MoveDirection::ToAccount { change, .. }) => change,
            _ => &[],
        }
    }

    /// Public key of the account that initiates an account-model transaction.
    pub fn account_signer(&self) -> Option<PublicKey> {
        match &self.kind {
            TxKind::Deploy { payer, .. } => Some(*payer),
            TxKind::Call { caller, .. } => Some(*caller),
            TxKind::Move(MoveDirection::ToUtxo { owner, .. }) => Some(*owner),
            _ => None,
        }
    }

    /// Sets the witness of input `index` to a single signature by `key`.
    pub fn sign_input(&mut self, index: usize, key: &crypto::KeyPair) {
        let msg = signing_message(&self.txid(), index as u32);
        if let Some(input) = self.inputs_mut().and_then(|i| i.get_mut(index)) {
            input.witness = alloc::vec![key.sign(&msg).0.to_vec()];
        }
    }

    /// Sets the account signature (deploys, calls, moves to UTXO).
    pub fn sign_account(&mut self, key: &crypto::KeyPair) {
        self.signature = Some(key.sign(&signing_message(&self.txid(), 0)));
    }

    pub fn check_structure(&self) -> Result<(), StructureError> {
        match &self.kind {
            TxKind::UtxoSpend { inputs, outputs } => {
                check_inputs(inputs)?;
                if outputs.is_empty() {
                    return Err(StructureError::NoOutputs);
                }
                check_outputs(outputs)?;
            }
            TxKind::Deploy { code, .. } => {
                if code.len() > MAX_CODE_LEN {
                    return Err(StructureError::CodeTooLong);
                }
            }
            TxKind::Call { addresses, .. } => {
                if addresses.len() > MAX_ADDRESS_TABLE {
                    return Err(StructureError::AddressTableTooLarge);
                }
            }
            TxKind::Move(MoveDirection::ToAccount { inputs, change, .. }) => {
                check_inputs(inputs)?;
                check_outputs(change)?;
            }
            TxKind::Move(MoveDirection::ToUtxo { outputs, .. }) => {
                if outputs.is_empty() {
                    return Err(StructureError::NoOutputs);
                }
                check_outputs(outputs)?;
            }
        }
        if let Some(v) = &self.validity {
            match (v.not_before, v.not_after) {
                (None, None) => return Err(StructureError::EmptyValidity),
                (Some(nb), Some(na)) if nb > na => return Err(StructureError::InvertedValidity),
                _ => {}
            }
        }
        Ok(())
    }
}

pub fn canonical_serialize(tx: &Transaction) -> Vec<u8> {
    tx.canonical_bytes()
}

pub fn txid(tx: &Transaction) -> TxId {
    tx.txid()
}

/// Message signed for input `index`: SHA-256(txid ‖ index as u32 LE).
/// Account signatures use index 0.
pub fn signing_message(txid: &TxId, index: u32) -> [u8; 32] {
    crypto::sha256_concat(&[&txid.0, &index.to_le_bytes()])
}

/// Level from the transaction alone; spent locks are unknown and ignored.
pub fn classify_level(tx: &Transaction) -> Level {
    classify_level_with(tx, |_| false)
}

/// Level given a lookup telling whether a spent outpoint carries a script lock.
pub fn classify_level_with(tx: &Transaction, spends_script: impl Fn(&Outpoint) -> bool) -> Level {
    match tx.kind {
        TxKind::Deploy { .. } | TxKind::Call { .. } | TxKind::Move(_) => return Level::L3,
        TxKind::UtxoSpend { .. } => {}
    }
    let creates_script = tx.created_outputs().iter().any(|o| o.lock.is_script());
    if creates_script || tx.inputs().iter().any(|i| spends_script(&i.outpoint)) {
        Level::L2
    } else if tx.validity.is_some() {
        Level::L1_5
    } else {
        Level::L1
    }
}
