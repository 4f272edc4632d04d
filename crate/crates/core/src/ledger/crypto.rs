use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

/// A SHA-256 digest, serialized as 64 lowercase hex characters.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Hash32(pub [u8; 32]);

impl Hash32 {
    pub const ZERO: Hash32 = Hash32([0; 32]);

    pub fn of(bytes: &[u8]) -> Self {
        Hash32(Sha256::digest(bytes).into())
    }

    pub fn of_parts(parts: &[&[u8]]) -> Self {
        let mut h = Sha256::new();
        for p in parts {
            h.update(p);
        }
        Hash32(h.finalize().into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).ok()?;
        Some(Hash32(out))
    }
}

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash32({})", &self.to_hex()[..12])
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Hash32 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash32 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Hash32::from_hex(&s).ok_or_else(|| serde::de::Error::custom("expected 64 hex characters"))
    }
}

pub type Signature = Hash32;

/// Signing and verification of digests on behalf of named identities.
pub trait SignatureScheme {
    fn sign(&self, identity: &str, digest: &Hash32) -> Signature;

    fn verify(&self, identity: &str, digest: &Hash32, signature: &Signature) -> bool {
        self.sign(identity, digest) == *signature
    }
}

/// Keyed-hash signatures: `sig = SHA256(key(identity) || digest)`, with every
/// key derived from one shared seed. Verifiers hold the same keyring, so this
/// gives tamper evidence only, not unforgeability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToyKeyring {
    seed: u64,
}

impl ToyKeyring {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn key(&self, identity: &str) -> Hash32 {
        Hash32::of_parts(&[b"tlmarket-key", &self.seed.to_le_bytes(), identity.as_bytes()])
    }
}

impl SignatureScheme for ToyKeyring {
    fn sign(&self, identity: &str, digest: &Hash32) -> Signature {
        Hash32::of_parts(&[&self.key(identity).0, &digest.0])
    }
}
