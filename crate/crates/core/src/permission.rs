//! Who may create and call programs: open access, user allow-lists, and
//! intermediary endorsements (per transaction or per user).

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::{self, KeyPair, PublicKey, Signature};
use crate::model::{Epoch, Transaction, TxId, TxKind};
use crate::rules::SystemConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "snake_case"))]
pub enum Granularity {
    PerUser,
    PerTransaction,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum PermissionPolicy {
    #[default]
    Open,
    AllowList(BTreeSet<PublicKey>),
    Endorsed(Granularity),
}

impl PermissionPolicy {
    pub(crate) fn encode(&self, w: &mut Writer) {
        match self {
            PermissionPolicy::Open => {
                w.u8(0);
            }
            PermissionPolicy::AllowList(keys) => {
                w.u8(1).set(keys, |w, k| {
                    w.raw(&k.0);
                });
            }
            PermissionPolicy::Endorsed(g) => {
                w.u8(2).u8(match g {
                    Granularity::PerUser => 0,
                    Granularity::PerTransaction => 1,
                });
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Intermediary {
    pub name: String,
    pub key: PublicKey,
}

/// Intermediary approval carried inside a transaction.
///
/// Fixed binary layout (hex in JSON):
/// - per transaction: `0x00 ‖ intermediary pk (32) ‖ sig over txid (64)`
/// - per user: `0x01 ‖ intermediary pk (32) ‖ user pk (32) ‖ expiry u64 LE ‖
///   sig over (user pk ‖ expiry) (64)`
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Endorsement {
    PerTransaction {
        intermediary: PublicKey,
        signature: Signature,
    },
    PerUser {
        intermediary: PublicKey,
        user: PublicKey,
        expiry: Epoch,
        signature: Signature,
    },
}

pub const PER_TRANSACTION_LEN: usize = 1 + 32 + 64;
pub const PER_USER_LEN: usize = 1 + 32 + 32 + 8 + 64;

fn credential_message(user: &PublicKey, expiry: Epoch) -> [u8; 40] {
    let mut msg = [0u8; 40];
    msg[..32].copy_from_slice(&user.0);
    msg[32..].copy_from_slice(&expiry.0.to_le_bytes());
    msg
}

impl Endorsement {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode(&mut w);
        w.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let e = Self::decode(&mut r)?;
        r.finish()?;
        Ok(e)
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        match self {
            Endorsement::PerTransaction { intermediary, signature } => {
                w.u8(0).raw(&intermediary.0).raw(&signature.0);
            }
            Endorsement::PerUser { intermediary, user, expiry, signature } => {
                w.u8(1).raw(&intermediary.0).raw(&user.0).u64(expiry.0).raw(&signature.0);
            }
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u8()? {
            0 => Ok(Endorsement::PerTransaction {
                intermediary: PublicKey(r.array()?),
                signature: Signature(r.array()?),
            }),
            1 => Ok(Endorsement::PerUser {
                intermediary: PublicKey(r.array()?),
                user: PublicKey(r.array()?),
                expiry: Epoch(r.u64()?),
                signature: Signature(r.array()?),
            }),
            tag => Err(DecodeError::BadTag { what: "endorsement", tag }),
        }
    }
}

#[cfg(feature = "serde")]
impl Serialize for Endorsement {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.to_bytes()))
    }
}

#[cfg(feature = "serde")]
impl<'de> Deserialize<'de> for Endorsement {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let s = String::deserialize(d)?;
        let bytes = hex::decode(s).map_err(D::Error::custom)?;
        Endorsement::from_bytes(&bytes).map_err(D::Error::custom)
    }
}

/// Signs a per-user credential valid through `expiry` (inclusive).
pub fn issue_credential(intermediary: &KeyPair, user: PublicKey, expiry: Epoch) -> Endorsement {
    Endorsement::PerUser {
        intermediary: intermediary.public(),
        user,
        expiry,
        signature: intermediary.sign(&credential_message(&user, expiry)),
    }
}

pub fn endorse_transaction(intermediary: &KeyPair, txid: &TxId) -> Endorsement {
    Endorsement::PerTransaction {
        intermediary: intermediary.public(),
        signature: intermediary.sign(&txid.0),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PermissionError {
    NotOnAllowList,
    MissingEndorsement,
    BadEndorsementSignature,
    CredentialExpired,
}

impl fmt::Display for PermissionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

fn registered(registry: &[Intermediary], key: &PublicKey) -> bool {
    registry.iter().any(|i| i.key == *key)
}

/// Checks `tx` against a single policy.
pub fn authorize(
    tx: &Transaction,
    policy: &PermissionPolicy,
    registry: &[Intermediary],
    epoch: Epoch,
) -> Result<(), PermissionError> {
    let user = tx.account_signer();
    match policy {
        PermissionPolicy::Open => Ok(()),
        PermissionPolicy::AllowList(keys) => match user {
            Some(pk) if keys.contains(&pk) => Ok(()),
            _ => Err(PermissionError::NotOnAllowList),
        },
        PermissionPolicy::Endorsed(Granularity::PerTransaction) => match &tx.endorsement {
            Some(Endorsement::PerTransaction { intermediary, signature }) => {
                let txid = tx.txid();
                if registered(registry, intermediary) && crypto::verify(&intermediary.0, &txid.0, &signature.0) {
                    Ok(())
                } else {
                    Err(PermissionError::BadEndorsementSignature)
                }
            }
            _ => Err(PermissionError::MissingEndorsement),
        },
        PermissionPolicy::Endorsed(Granularity::PerUser) => match &tx.endorsement {
            Some(Endorsement::PerUser { intermediary, user: holder, expiry, signature }) => {
                let msg = credential_message(holder, *expiry);
                if !registered(registry, intermediary)
                    || !crypto::verify(&intermediary.0, &msg, &signature.0)
                    || user != Some(*holder)
                {
                    Err(PermissionError::BadEndorsementSignature)
                } else if *expiry < epoch {
                    Err(PermissionError::CredentialExpired)
                } else {
                    Ok(())
                }
            }
            _ => Err(PermissionError::MissingEndorsement),
        },
    }
}

/// Selects the policy that governs `tx` under `cfg`: deploys and calls have
/// their own policies, UTXO spends and moves are always open.
pub fn authorize_tx(tx: &Transaction, cfg: &SystemConfig, epoch: Epoch) -> Result<(), PermissionError> {
    let policy = match tx.kind {
        TxKind::Deploy { .. } => &cfg.deploy_policy,
        TxKind::Call { .. } => &cfg.call_policy,
        TxKind::UtxoSpend { .. } | TxKind::Move(_) => return Ok(()),
    };
    authorize(tx, policy, &cfg.intermediary_registry, epoch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::keygen;
    use crate::model::{Address, Amount};
    use alloc::vec;

    fn call(caller: PublicKey) -> Transaction {
        Transaction::new(TxKind::Call {
            contract: Address([9; 32]),
            arg: 1,
            attached: Amount(0),
            caller,
            gas_limit: 100,
            gas_price: 1,
            addresses: vec![],
            access: None,
        })
    }

    fn registry(kp: &KeyPair) -> Vec<Intermediary> {
        vec![Intermediary { name: "bank".into(), key: kp.public() }]
    }

    #[test]
    fn open_allows_anything() {
        let tx = call(keygen(&[1; 32]).public());
        assert_eq!(authorize(&tx, &PermissionPolicy::Open, &[], Epoch(0)), Ok(()));
    }

    #[test]
    fn allow_list() {
        let alice = keygen(&[1; 32]).public();
        let bob = keygen(&[2; 32]).public();
        let policy = PermissionPolicy::AllowList([alice].into_iter().collect());
        assert_eq!(authorize(&call(alice), &policy, &[], Epoch(0)), Ok(()));
        assert_eq!(
            authorize(&call(bob), &policy, &[], Epoch(0)),
            Err(PermissionError::NotOnAllowList)
        );
    }

    #[test]
    fn per_transaction_endorsement() {
        let bank = keygen(&[7; 32]);
        let rogue = keygen(&[8; 32]);
        let policy = PermissionPolicy::Endorsed(Granularity::PerTransaction);
        let mut tx = call(keygen(&[1; 32]).public());
        assert_eq!(
            authorize(&tx, &policy, &registry(&bank), Epoch(0)),
            Err(PermissionError::MissingEndorsement)
        );
        tx.endorsement = Some(endorse_transaction(&rogue, &tx.txid()));
        assert_eq!(
            authorize(&tx, &policy, &registry(&bank), Epoch(0)),
            Err(PermissionError::BadEndorsementSignature)
        );
        tx.endorsement = Some(endorse_transaction(&bank, &tx.txid()));
        assert_eq!(authorize(&tx, &policy, &registry(&bank), Epoch(0)), Ok(()));
    }

    #[test]
    fn per_user_credential_expiry_is_inclusive() {
        let bank = keygen(&[7; 32]);
        let user = keygen(&[1; 32]).public();
        let policy = PermissionPolicy::Endorsed(Granularity::PerUser);
        let mut tx = call(user);
        tx.endorsement = Some(issue_credential(&bank, user, Epoch(10)));
        let reg = registry(&bank);
        assert_eq!(authorize(&tx, &policy, &reg, Epoch(10)), Ok(()));
        assert_eq!(
            authorize(&tx, &policy, &reg, Epoch(11)),
            Err(PermissionError::CredentialExpired)
        );
    }

    #[test]
    fn credential_for_other_user_rejected() {
        let bank = keygen(&[7; 32]);
        let user = keygen(&[1; 32]).public();
        let other = keygen(&[2; 32]).public();
        let mut tx = call(user);
        tx.endorsement = Some(issue_credential(&bank, other, Epoch(10)));
        assert_eq!(
            authorize(&tx, &PermissionPolicy::Endorsed(Granularity::PerUser), &registry(&bank), Epoch(0)),
            Err(PermissionError::BadEndorsementSignature)
        );
    }

    #[test]
    fn endorsement_layouts_have_fixed_length() {
        let bank = keygen(&[7; 32]);
        let user = keygen(&[1; 32]).public();
        let cred = issue_credential(&bank, user, Epoch(3));
        assert_eq!(cred.to_bytes().len(), PER_USER_LEN);
        assert_eq!(Endorsement::from_bytes(&cred.to_bytes()), Ok(cred));
        let e = endorse_transaction(&bank, &TxId([1; 32]));
        assert_eq!(e.to_bytes().len(), PER_TRANSACTION_LEN);
    }
}
