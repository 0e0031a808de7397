//! Within-system rules fixed at genesis: issuance schedule, fee floors, and
//! the optional allow-list and expiry rules.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::codec::Writer;
use crate::crypto::{self, PublicKey};
use crate::model::{Address, Amount, Epoch, Level, Output, Transaction, TxKind};
use crate::permission::{Intermediary, PermissionPolicy};
use crate::utxo::UtxoSet;

/// How contract calls in a batch are scheduled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum AccessMode {
    /// Calls carry access declarations; non-conflicting calls run in parallel.
    Declared,
    /// Calls run serially and may touch any state.
    #[default]
    Dynamic,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SystemConfig {
    pub max_level: Level,
    pub initial_subsidy: Amount,
    pub halving_interval: u64,
    pub min_fee: Amount,
    pub min_gas_price: u64,
    pub covenants: bool,
    pub access_mode: AccessMode,
    #[cfg_attr(feature = "serde", serde(default))]
    pub allow_list: Option<BTreeSet<Address>>,
    pub expiry_enabled: bool,
    /// Key locking coinbase outputs. Its address receives contract fees.
    pub operator_key: PublicKey,
    #[cfg_attr(feature = "serde", serde(default))]
    pub deploy_policy: PermissionPolicy,
    #[cfg_attr(feature = "serde", serde(default))]
    pub call_policy: PermissionPolicy,
    #[cfg_attr(feature = "serde", serde(default))]
    pub intermediary_registry: Vec<Intermediary>,
    /// Outputs created at genesis as `(genesis hash, index)`.
    #[cfg_attr(feature = "serde", serde(default))]
    pub genesis_outputs: Vec<Output>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub genesis_balances: BTreeMap<Address, Amount>,
}

impl SystemConfig {
    /// Permissive configuration: every level, no fee floors, no optional rules.
    pub fn new(operator_key: PublicKey) -> Self {
        SystemConfig {
            max_level: Level::L3,
            initial_subsidy: Amount(50),
            halving_interval: 10,
            min_fee: Amount::ZERO,
            min_gas_price: 0,
            covenants: false,
            access_mode: AccessMode::Dynamic,
            allow_list: None,
            expiry_enabled: false,
            operator_key,
            deploy_policy: PermissionPolicy::Open,
            call_policy: PermissionPolicy::Open,
            intermediary_registry: Vec::new(),
            genesis_outputs: Vec::new(),
            genesis_balances: BTreeMap::new(),
        }
    }

    pub fn operator_address(&self) -> Address {
        Address::from_public_key(&self.operator_key)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.halving_interval == 0 {
            return Err(ConfigError::ZeroHalvingInterval);
        }
        let endorsed = |p: &PermissionPolicy| matches!(p, PermissionPolicy::Endorsed(_));
        if (endorsed(&self.deploy_policy) || endorsed(&self.call_policy))
            && self.intermediary_registry.is_empty()
        {
            return Err(ConfigError::EmptyRegistry);
        }
        for o in &self.genesis_outputs {
            if o.amount == Amount::ZERO || o.lock.check().is_err() {
                return Err(ConfigError::BadGenesisOutput);
            }
            if o.expiry.is_some() && !self.expiry_enabled {
                return Err(ConfigError::BadGenesisOutput);
            }
        }
        let outputs = Amount::checked_sum(self.genesis_outputs.iter().map(|o| o.amount));
        let balances = Amount::checked_sum(self.genesis_balances.values().copied());
        match (outputs, balances) {
            (Some(a), Some(b)) if a.checked_add(b).is_some() => Ok(()),
            _ => Err(ConfigError::SupplyOverflow),
        }
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(self.max_level.code())
            .u64(self.initial_subsidy.0)
            .u64(self.halving_interval)
            .u64(self.min_fee.0)
            .u64(self.min_gas_price)
            .bool(self.covenants)
            .u8(match self.access_mode {
                AccessMode::Declared => 0,
                AccessMode::Dynamic => 1,
            })
            .option(self.allow_list.as_ref(), |w, set| {
                w.set(set, |w, a| {
                    w.raw(&a.0);
                });
            })
            .bool(self.expiry_enabled)
            .raw(&self.operator_key.0);
        self.deploy_policy.encode(&mut w);
        self.call_policy.encode(&mut w);
        w.list(&self.intermediary_registry, |w, i| {
            w.bytes(i.name.as_bytes()).raw(&i.key.0);
        });
        w.list(&self.genesis_outputs, |w, o| o.encode(w));
        w.count(self.genesis_balances.len());
        for (a, amt) in &self.genesis_balances {
            w.raw(&a.0).u64(amt.0);
        }
        w.into_bytes()
    }

    /// SHA-256 of the canonical config encoding. Also serves as the txid of
    /// the genesis outputs.
    pub fn hash(&self) -> [u8; 32] {
        crypto::sha256(&self.canonical_bytes())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConfigError {
    ZeroHalvingInterval,
    EmptyRegistry,
    BadGenesisOutput,
    SupplyOverflow,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Issuance for a batch at `epoch`: `initial_subsidy >> (epoch / halving_interval)`.
pub fn subsidy(epoch: Epoch, cfg: &SystemConfig) -> Amount {
    let halvings = epoch.0 / cfg.halving_interval.max(1);
    if halvings >= 64 {
        Amount::ZERO
    } else {
        Amount(cfg.initial_subsidy.0 >> halvings)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeeError {
    InsufficientFee,
    GasPriceTooLow,
}

/// UTXO spends must pay at least `min_fee` (the caller supplies the implicit
/// fee); deploys and calls must bid at least `min_gas_price`. Moves are exempt.
pub fn check_fee(tx: &Transaction, implicit_fee: Amount, cfg: &SystemConfig) -> Result<(), FeeError> {
    match &tx.kind {
        TxKind::UtxoSpend { .. } if implicit_fee < cfg.min_fee => Err(FeeError::InsufficientFee),
        TxKind::Deploy { gas_price, .. } | TxKind::Call { gas_price, .. }
            if *gas_price < cfg.min_gas_price =>
        {
            Err(FeeError::GasPriceTooLow)
        }
        _ => Ok(()),
    }
}

/// Removes every output whose expiry is at or before `epoch` and returns the
/// total removed. No-op when the expiry rule is disabled.
pub fn apply_expiry(utxos: &mut UtxoSet, epoch: Epoch, cfg: &SystemConfig) -> Amount {
    if !cfg.expiry_enabled {
        return Amount::ZERO;
    }
    utxos.remove_where(|_, o| o.expiry.is_some_and(|e| e <= epoch))
}

/// Index of the first output whose address is outside the allow-list.
pub fn check_allow_list(outputs: &[Output], cfg: &SystemConfig) -> Result<(), usize> {
    let Some(list) = &cfg.allow_list else {
        return Ok(());
    };
    match outputs.iter().position(|o| !list.contains(&o.lock.address())) {
        Some(i) => Err(i),
        None => Ok(()),
    }
}
