#![allow(dead_code)]

use rand::Rng;
use tierledger_core::crypto::{keygen, KeyPair, PublicKey, Signature};
use tierledger_core::model::*;
use tierledger_core::permission::Endorsement;

pub fn key(i: u8) -> KeyPair {
    keygen(&[i; 32])
}

pub fn pk(i: u8) -> PublicKey {
    key(i).public()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn bytes(rng: &mut impl Rng, max: usize) -> Vec<u8> {
    let len = rng.gen_range(0..=max);
    let mut v = vec![0u8; len];
    rng.fill_bytes(&mut v);
    v
}

fn array32(rng: &mut impl Rng) -> [u8; 32] {
    let mut a = [0u8; 32];
    rng.fill_bytes(&mut a);
    a
}

pub fn random_lock(rng: &mut impl Rng) -> Lock {
    match rng.gen_range(0..3) {
        0 => Lock::PubKey(PublicKey(array32(rng))),
        1 => {
            let n = rng.gen_range(1..=4);
            Lock::MultiSig { m: rng.gen_range(1..=n), keys: (0..n).map(|_| PublicKey(array32(rng))).collect() }
        }
        _ => {
            let mut code = bytes(rng, 40);
            code.push(0x51);
            Lock::Script(code)
        }
    }
}

pub fn random_output(rng: &mut impl Rng) -> Output {
    Output {
        amount: Amount(rng.gen_range(1..1_000_000)),
        lock: random_lock(rng),
        expiry: rng.gen_bool(0.3).then(|| Epoch(rng.gen_range(0..1000))),
    }
}

fn random_input(rng: &mut impl Rng) -> Input {
    Input {
        outpoint: Outpoint::new(TxId(array32(rng)), rng.gen_range(0..8)),
        witness: (0..rng.gen_range(0..3)).map(|_| bytes(rng, 80)).collect(),
    }
}

fn random_decl(rng: &mut impl Rng) -> AccessDecl {
    let mut d = AccessDecl::default();
    for _ in 0..rng.gen_range(0..3) {
        d.balances_read.insert(Address(array32(rng)));
        d.balances_written.insert(Address(array32(rng)));
        d.storage_read.insert((Address(array32(rng)), rng.gen()));
        d.storage_written.insert((Address(array32(rng)), rng.gen()));
        d.callees.insert(Address(array32(rng)));
    }
    d
}

fn outputs(rng: &mut impl Rng, min: usize) -> Vec<Output> {
    (0..rng.gen_range(min..4)).map(|_| random_output(rng)).collect()
}

/// Structurally valid transaction of any kind, with witnesses, endorsement
/// and account signature filled with random bytes.
pub fn random_tx(rng: &mut impl Rng) -> Transaction {
    let kind = match rng.gen_range(0..5) {
        0 => TxKind::UtxoSpend {
            inputs: (0..rng.gen_range(1..4)).map(|_| random_input(rng)).collect(),
            outputs: outputs(rng, 1),
        },
        1 => TxKind::Deploy {
            code: bytes(rng, 64),
            endowment: Amount(rng.gen()),
            payer: PublicKey(array32(rng)),
            gas_limit: rng.gen(),
            gas_price: rng.gen(),
            footprint: random_decl(rng),
        },
        2 => TxKind::Call {
            contract: Address(array32(rng)),
            arg: rng.gen(),
            attached: Amount(rng.gen()),
            caller: PublicKey(array32(rng)),
            gas_limit: rng.gen(),
            gas_price: rng.gen(),
            addresses: (0..rng.gen_range(0..3)).map(|_| Address(array32(rng))).collect(),
            access: rng.gen_bool(0.5).then(|| random_decl(rng)),
        },
        3 => TxKind::Move(MoveDirection::ToAccount {
            inputs: (0..rng.gen_range(1..3)).map(|_| random_input(rng)).collect(),
            account: Address(array32(rng)),
            change: outputs(rng, 0),
        }),
        _ => TxKind::Move(MoveDirection::ToUtxo { owner: PublicKey(array32(rng)), outputs: outputs(rng, 1) }),
    };
    let mut tx = Transaction::new(kind);
    tx.nonce = rng.gen();
    if rng.gen_bool(0.4) {
        let a = rng.gen_range(0..500);
        let b = a + rng.gen_range(0..500);
        tx.validity = Some(match rng.gen_range(0..3) {
            0 => Validity { not_before: Some(Epoch(a)), not_after: None },
            1 => Validity { not_before: None, not_after: Some(Epoch(b)) },
            _ => Validity { not_before: Some(Epoch(a)), not_after: Some(Epoch(b)) },
        });
    }
    tx.endorsement = match rng.gen_range(0..3) {
        0 => None,
        1 => Some(Endorsement::PerTransaction { intermediary: PublicKey(array32(rng)), signature: sig(rng) }),
        _ => Some(Endorsement::PerUser {
            intermediary: PublicKey(array32(rng)),
            user: PublicKey(array32(rng)),
            expiry: Epoch(rng.gen()),
            signature: sig(rng),
        }),
    };
    if rng.gen_bool(0.5) {
        tx.signature = Some(sig(rng));
    }
    tx
}

fn sig(rng: &mut impl Rng) -> Signature {
    let mut s = [0u8; 64];
    rng.fill_bytes(&mut s);
    Signature(s)
}
