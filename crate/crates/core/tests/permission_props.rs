mod common;

use common::{key, pk, random_tx};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tierledger_core::model::*;
use tierledger_core::permission::*;

fn registry() -> Vec<Intermediary> {
    vec![Intermediary { name: "bank-a".into(), key: pk(50) }, Intermediary { name: "bank-b".into(), key: pk(51) }]
}

fn call_by(user: u8) -> Transaction {
    Transaction::new(TxKind::Call {
        contract: Address([9; 32]),
        arg: 1,
        attached: Amount::ZERO,
        caller: pk(user),
        gas_limit: 10,
        gas_price: 1,
        addresses: vec![],
        access: None,
    })
}

const PER_USER: PermissionPolicy = PermissionPolicy::Endorsed(Granularity::PerUser);
const PER_TX: PermissionPolicy = PermissionPolicy::Endorsed(Granularity::PerTransaction);

#[test]
fn credential_boundaries() {
    let mut tx = call_by(3);
    assert_eq!(authorize(&tx, &PER_USER, &registry(), Epoch(0)), Err(PermissionError::MissingEndorsement));
    tx.endorsement = Some(issue_credential(&key(50), pk(3), Epoch(10)));
    assert_eq!(authorize(&tx, &PER_USER, &registry(), Epoch(10)), Ok(()));
    assert_eq!(authorize(&tx, &PER_USER, &registry(), Epoch(11)), Err(PermissionError::CredentialExpired));

    tx.endorsement = Some(issue_credential(&key(60), pk(3), Epoch(10)));
    assert_eq!(authorize(&tx, &PER_USER, &registry(), Epoch(0)), Err(PermissionError::BadEndorsementSignature));

    // a credential issued to someone else does not transfer
    tx.endorsement = Some(issue_credential(&key(50), pk(4), Epoch(10)));
    assert_eq!(authorize(&tx, &PER_USER, &registry(), Epoch(0)), Err(PermissionError::BadEndorsementSignature));
}

#[test]
fn per_transaction_endorsement() {
    let mut tx = call_by(3);
    tx.endorsement = Some(endorse_transaction(&key(51), &tx.txid()));
    assert_eq!(authorize(&tx, &PER_TX, &registry(), Epoch(0)), Ok(()));
    tx.endorsement = Some(endorse_transaction(&key(61), &tx.txid()));
    assert_eq!(authorize(&tx, &PER_TX, &registry(), Epoch(0)), Err(PermissionError::BadEndorsementSignature));
    // an endorsement does not carry over to a different transaction
    let mut other = call_by(3);
    other.nonce = 1;
    other.endorsement = Some(endorse_transaction(&key(51), &tx.txid()));
    assert_eq!(authorize(&other, &PER_TX, &registry(), Epoch(0)), Err(PermissionError::BadEndorsementSignature));
}

#[test]
fn every_single_byte_credential_tamper_is_caught() {
    let mut tx = call_by(3);
    let good = issue_credential(&key(50), pk(3), Epoch(1_000));
    let bytes = good.to_bytes();
    assert_eq!(bytes.len(), PER_USER_LEN);
    let mut checked = 0;
    // the leading tag selects the variant; every other byte is covered by the signature
    for i in 1..bytes.len() {
        for flip in [0x01u8, 0x80, 0xff] {
            let mut b = bytes.clone();
            b[i] ^= flip;
            let e = Endorsement::from_bytes(&b).expect("fixed layout decodes");
            tx.endorsement = Some(e);
            assert_eq!(
                authorize(&tx, &PER_USER, &registry(), Epoch(0)),
                Err(PermissionError::BadEndorsementSignature),
                "byte {i} flip {flip:#x}"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 3 * (PER_USER_LEN - 1));
}

#[test]
fn allow_list() {
    let policy = PermissionPolicy::AllowList([pk(3)].into());
    assert_eq!(authorize(&call_by(3), &policy, &[], Epoch(0)), Ok(()));
    assert_eq!(authorize(&call_by(4), &policy, &[], Epoch(0)), Err(PermissionError::NotOnAllowList));
}

proptest! {
    #[test]
    fn policies_only_restrict(seed in any::<u64>(), epoch in 0u64..2000) {
        let tx = random_tx(&mut ChaCha8Rng::seed_from_u64(seed));
        let policies = [
            PermissionPolicy::Open,
            PermissionPolicy::AllowList(tx.account_signer().into_iter().collect()),
            PER_USER,
            PER_TX,
        ];
        for p in &policies {
            if authorize(&tx, p, &registry(), Epoch(epoch)).is_ok() {
                prop_assert_eq!(authorize(&tx, &PermissionPolicy::Open, &registry(), Epoch(epoch)), Ok(()));
            }
        }
    }

    #[test]
    fn endorsement_encoding_round_trips(seed in any::<[u8; 32]>(), user in any::<[u8; 32]>(), expiry in any::<u64>()) {
        let k = tierledger_core::crypto::keygen(&seed);
        for e in [
            issue_credential(&k, tierledger_core::crypto::PublicKey(user), Epoch(expiry)),
            endorse_transaction(&k, &TxId(user)),
        ] {
            prop_assert_eq!(Endorsement::from_bytes(&e.to_bytes()).unwrap(), e);
        }
    }
}
