//! Core of a tiered programmable-money ledger: signature-locked outputs,
//! time-bounded and scripted outputs, and stateful contracts, governed by
//! genesis-fixed system rules and recorded in a replayable receipt log.
//!
//! The crate is `no_std` with `alloc`. The `std` feature enables threaded
//! execution of declared-access contract calls; `serde` enables JSON-friendly
//! (de)serialization with hex-encoded byte fields.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod codec;
pub mod crypto;
pub mod ledger;
pub mod model;
pub mod permission;
pub mod rules;
pub mod script;
pub mod status;
pub mod utxo;
pub mod vm;

#[cfg(feature = "serde")]
mod serde_hex;

use core::fmt;

pub use crypto::{keygen, KeyPair, PublicKey, Signature};
pub use ledger::{apply_batch, replay_verify, state_digest, Batch, BatchHeader, Divergence, Hash32, LedgerState, Receipt};
pub use model::{
    canonical_serialize, classify_level, txid, AccessDecl, Address, Amount, Epoch, Input, Level, Lock, MoveDirection,
    Outpoint, Output, Transaction, TxId, TxKind, Validity,
};
pub use rules::{AccessMode, SystemConfig};

pub(crate) fn fmt_hex(f: &mut fmt::Formatter<'_>, bytes: &[u8]) -> fmt::Result {
    bytes.iter().try_for_each(|b| write!(f, "{b:02x}"))
}
