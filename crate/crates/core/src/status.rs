//! Receipt status codes. Values are stable and part of the receipt format.
//!
//! | range   | meaning |
//! |---------|---------|
//! | 0       | applied |
//! | 1-11    | structurally invalid transaction |
//! | 100-112 | UTXO validation and pending-pool outcomes |
//! | 201-210 | output-script failure, `200 + reason` |
//! | 301-308 | contract pre-check rejection or abort |
//! | 310-316 | contract reverted, `310 + reason` |
//! | 400-403 | permissioning |
//! | 500-503 | system rules |

use crate::model::StructureError;
use crate::permission::PermissionError;
use crate::rules::FeeError;
use crate::script::ScriptFailure;
use crate::utxo::{PendingOutcome, UtxoRejection};
use crate::vm::{CallRejection, ExecStatus, RevertReason};

pub const OK: u16 = 0;

pub const NO_INPUTS: u16 = 1;
pub const NO_OUTPUTS: u16 = 2;
pub const ZERO_AMOUNT: u16 = 3;
pub const BAD_MULTISIG: u16 = 4;
pub const SCRIPT_TOO_LONG: u16 = 5;
pub const CODE_TOO_LONG: u16 = 6;
pub const EMPTY_VALIDITY: u16 = 7;
pub const INVERTED_VALIDITY: u16 = 8;
pub const WITNESS_TOO_LARGE: u16 = 9;
pub const ADDRESS_TABLE_TOO_LARGE: u16 = 10;
pub const DUPLICATE_INPUT: u16 = 11;

pub const MISSING_INPUT: u16 = 100;
pub const DOUBLE_SPEND_IN_BATCH: u16 = 101;
pub const EXPIRED: u16 = 102;
pub const OUTSIDE_VALIDITY_WINDOW: u16 = 103;
pub const INSUFFICIENT_FEE: u16 = 104;
pub const LOCK_FAILED: u16 = 105;
pub const VALUE_OVERFLOW: u16 = 106;
pub const EXPIRY_DISABLED: u16 = 107;
pub const PENDING: u16 = 110;
pub const PENDING_REPLACED: u16 = 111;
pub const REJECTED_LOWER_FEE: u16 = 112;

pub const SCRIPT_FAILURE_BASE: u16 = 200;

pub const OUT_OF_GAS: u16 = 301;
pub const ACCESS_VIOLATION: u16 = 302;
pub const MISSING_ACCESS_DECL: u16 = 303;
pub const MALFORMED_CODE: u16 = 304;
pub const INSUFFICIENT_BALANCE: u16 = 305;
pub const UNKNOWN_CONTRACT: u16 = 306;
pub const BAD_NONCE: u16 = 307;
pub const BAD_ACCOUNT_SIGNATURE: u16 = 308;
pub const REVERTED_BASE: u16 = 310;

pub const NOT_ON_ALLOW_LIST: u16 = 400;
pub const MISSING_ENDORSEMENT: u16 = 401;
pub const BAD_ENDORSEMENT_SIGNATURE: u16 = 402;
pub const CREDENTIAL_EXPIRED: u16 = 403;

pub const LEVEL_EXCEEDS_CONFIG: u16 = 500;
pub const GAS_PRICE_TOO_LOW: u16 = 502;
pub const ALLOW_LIST_VIOLATION: u16 = 503;

pub fn from_structure(e: &StructureError) -> u16 {
    match e {
        StructureError::NoInputs => NO_INPUTS,
        StructureError::NoOutputs => NO_OUTPUTS,
        StructureError::ZeroAmount => ZERO_AMOUNT,
        StructureError::BadMultiSig => BAD_MULTISIG,
        StructureError::ScriptTooLong => SCRIPT_TOO_LONG,
        StructureError::CodeTooLong => CODE_TOO_LONG,
        StructureError::EmptyValidity => EMPTY_VALIDITY,
        StructureError::InvertedValidity => INVERTED_VALIDITY,
        StructureError::WitnessTooLarge => WITNESS_TOO_LARGE,
        StructureError::AddressTableTooLarge => ADDRESS_TABLE_TOO_LARGE,
        StructureError::DuplicateInput => DUPLICATE_INPUT,
    }
}

pub fn from_script(f: ScriptFailure) -> u16 {
    SCRIPT_FAILURE_BASE + f.code()
}

pub fn from_utxo(e: &UtxoRejection) -> u16 {
    match e {
        UtxoRejection::MissingInput(_) => MISSING_INPUT,
        UtxoRejection::DoubleSpendInBatch(_) => DOUBLE_SPEND_IN_BATCH,
        UtxoRejection::Expired(_) => EXPIRED,
        UtxoRejection::OutsideValidityWindow => OUTSIDE_VALIDITY_WINDOW,
        UtxoRejection::InsufficientFee => INSUFFICIENT_FEE,
        UtxoRejection::LockFailed { script: Some(f), .. } => from_script(*f),
        UtxoRejection::LockFailed { script: None, .. } => LOCK_FAILED,
        UtxoRejection::AllowListViolation(_) => ALLOW_LIST_VIOLATION,
        UtxoRejection::ExpiryDisabled => EXPIRY_DISABLED,
        UtxoRejection::ValueOverflow => VALUE_OVERFLOW,
    }
}

pub fn from_pending(o: &PendingOutcome) -> u16 {
    match o {
        PendingOutcome::Accepted => PENDING,
        PendingOutcome::Replaced(_) => PENDING_REPLACED,
        PendingOutcome::RejectedLowerFee => REJECTED_LOWER_FEE,
    }
}

pub fn from_permission(e: &PermissionError) -> u16 {
    match e {
        PermissionError::NotOnAllowList => NOT_ON_ALLOW_LIST,
        PermissionError::MissingEndorsement => MISSING_ENDORSEMENT,
        PermissionError::BadEndorsementSignature => BAD_ENDORSEMENT_SIGNATURE,
        PermissionError::CredentialExpired => CREDENTIAL_EXPIRED,
    }
}

pub fn from_fee(e: &FeeError) -> u16 {
    match e {
        FeeError::InsufficientFee => INSUFFICIENT_FEE,
        FeeError::GasPriceTooLow => GAS_PRICE_TOO_LOW,
    }
}

pub fn from_rejection(e: &CallRejection) -> u16 {
    match e {
        CallRejection::UnknownContract(_) => UNKNOWN_CONTRACT,
        CallRejection::InsufficientBalance => INSUFFICIENT_BALANCE,
        CallRejection::BadNonce { .. } => BAD_NONCE,
        CallRejection::MissingAccessDecl => MISSING_ACCESS_DECL,
        CallRejection::MalformedCode(_) => MALFORMED_CODE,
        // the ledger only routes deploys and calls to the VM
        CallRejection::NotAContractTx => MALFORMED_CODE,
    }
}

pub fn from_exec(s: &ExecStatus) -> u16 {
    match s {
        ExecStatus::Committed => OK,
        ExecStatus::Reverted(r) => from_revert(*r),
        ExecStatus::AccessViolation(_) => ACCESS_VIOLATION,
        ExecStatus::OutOfGas => OUT_OF_GAS,
    }
}

pub fn from_revert(r: RevertReason) -> u16 {
    REVERTED_BASE + r.code()
}

/// Whether the transaction applied in full. Reverted and out-of-gas contract
/// calls are not successes but still pay their fee and bump the nonce.
pub fn is_success(code: u16) -> bool {
    code == OK
}

/// Short name of a status code, `None` for unassigned values.
pub fn name(code: u16) -> Option<&'static str> {
    Some(match code {
        OK => "Ok",
        NO_INPUTS => "NoInputs",
        NO_OUTPUTS => "NoOutputs",
        ZERO_AMOUNT => "ZeroAmount",
        BAD_MULTISIG => "BadMultiSig",
        SCRIPT_TOO_LONG => "ScriptTooLong",
        CODE_TOO_LONG => "CodeTooLong",
        EMPTY_VALIDITY => "EmptyValidity",
        INVERTED_VALIDITY => "InvertedValidity",
        WITNESS_TOO_LARGE => "WitnessTooLarge",
        ADDRESS_TABLE_TOO_LARGE => "AddressTableTooLarge",
        DUPLICATE_INPUT => "DuplicateInput",
        MISSING_INPUT => "MissingInput",
        DOUBLE_SPEND_IN_BATCH => "DoubleSpendInBatch",
        EXPIRED => "Expired",
        OUTSIDE_VALIDITY_WINDOW => "OutsideValidityWindow",
        INSUFFICIENT_FEE => "InsufficientFee",
        LOCK_FAILED => "LockFailed",
        VALUE_OVERFLOW => "ValueOverflow",
        EXPIRY_DISABLED => "ExpiryDisabled",
        PENDING => "Pending",
        PENDING_REPLACED => "PendingReplaced",
        REJECTED_LOWER_FEE => "RejectedLowerFee",
        201 => "ScriptEmpty",
        202 => "ScriptStackUnderflow",
        203 => "ScriptStepLimit",
        204 => "ScriptStackLimit",
        205 => "ScriptVerifyFailed",
        206 => "ScriptReturn",
        207 => "ScriptBadPush",
        208 => "ScriptUnbalancedIf",
        209 => "ScriptTypeError",
        210 => "ScriptBadOpcode",
        OUT_OF_GAS => "OutOfGas",
        ACCESS_VIOLATION => "AccessViolation",
        MISSING_ACCESS_DECL => "MissingAccessDecl",
        MALFORMED_CODE => "MalformedCode",
        INSUFFICIENT_BALANCE => "InsufficientBalance",
        UNKNOWN_CONTRACT => "UnknownContract",
        BAD_NONCE => "BadNonce",
        BAD_ACCOUNT_SIGNATURE => "BadAccountSignature",
        310 => "Reverted",
        311 => "RevertedStackUnderflow",
        312 => "RevertedStackOverflow",
        313 => "RevertedTypeError",
        314 => "RevertedArithmetic",
        315 => "RevertedBadAddressIndex",
        316 => "RevertedInsufficientFunds",
        NOT_ON_ALLOW_LIST => "NotOnAllowList",
        MISSING_ENDORSEMENT => "MissingEndorsement",
        BAD_ENDORSEMENT_SIGNATURE => "BadEndorsementSignature",
        CREDENTIAL_EXPIRED => "CredentialExpired",
        LEVEL_EXCEEDS_CONFIG => "LevelExceedsConfig",
        GAS_PRICE_TOO_LOW => "GasPriceTooLow",
        ALLOW_LIST_VIOLATION => "AllowListViolation",
        _ => return None,
    })
}

/// Inverse of [`name`].
pub fn from_name(s: &str) -> Option<u16> {
    (0..=600u16).find(|c| name(*c) == Some(s))
}
