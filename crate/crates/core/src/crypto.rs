//! Ed25519 signatures, SHA-256, and order-preserving m-of-n multisignature checks.

use core::fmt;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use sha2::{Digest, Sha256};

/// Upper bound on keys in a multisignature lock.
pub const MAX_MULTISIG_KEYS: usize = 16;

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// SHA-256 over the concatenation of `parts`.
pub fn sha256_concat(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; 32]);

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; 64]);

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey(")?;
        crate::fmt_hex(f, &self.0)?;
        write!(f, ")")
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature(")?;
        crate::fmt_hex(f, &self.0[..8])?;
        write!(f, "..)")
    }
}

impl AsRef<[u8]> for PublicKey {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl AsRef<[u8]> for Signature {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

/// Ed25519 key pair derived deterministically from a 32-byte seed.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    public: PublicKey,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public).finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn from_seed(seed: &[u8; 32]) -> Self {
        let signing = SigningKey::from_bytes(seed);
        let public = PublicKey(signing.verifying_key().to_bytes());
        Self { signing, public }
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature(self.signing.sign(msg).to_bytes())
    }
}

pub fn keygen(seed: &[u8; 32]) -> KeyPair {
    KeyPair::from_seed(seed)
}

/// Verifies `sig` over `msg` under `pk`. Any malformed input yields `false`.
pub fn verify(pk: &[u8], msg: &[u8], sig: &[u8]) -> bool {
    let Ok(pk) = <[u8; 32]>::try_from(pk) else {
        return false;
    };
    let Ok(sig) = <[u8; 64]>::try_from(sig) else {
        return false;
    };
    let Ok(key) = VerifyingKey::from_bytes(&pk) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig);
    key.verify_strict(msg, &sig).is_ok()
}

/// Order-preserving m-of-n check.
///
/// Signatures are matched against keys in a single left-to-right pass: each
/// signature consumes keys until one verifies it, and a consumed key is never
/// revisited. Every supplied signature must find a key, and at least `m`
/// signatures must be supplied.
pub fn check_multisig<K: AsRef<[u8]>, S: AsRef<[u8]>>(
    m: usize,
    keys: &[K],
    sigs: &[S],
    msg: &[u8],
) -> bool {
    let n = keys.len();
    if m == 0 || m > n || n > MAX_MULTISIG_KEYS || sigs.len() > n || sigs.len() < m {
        return false;
    }
    let mut key_idx = 0;
    for sig in sigs {
        loop {
            if key_idx == n {
                return false;
            }
            let matched = verify(keys[key_idx].as_ref(), msg, sig.as_ref());
            key_idx += 1;
            if matched {
                break;
            }
        }
    }
    true
}
