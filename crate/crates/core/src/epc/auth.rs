//! Keyed-digest challenge/response standing in for SIM algorithms.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Nonce(pub [u8; 16]);

impl std::fmt::Display for Nonce {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

pub type Digest32 = [u8; 32];

fn digest(parts: &[&[u8]]) -> Digest32 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// SHA-256(key ‖ nonce)
pub fn challenge_response(key: &[u8], nonce: &Nonce) -> Digest32 {
    digest(&[key, &nonce.0])
}

/// SHA-256(key ‖ nonce ‖ "session")
pub fn session_key(key: &[u8], nonce: &Nonce) -> Digest32 {
    digest(&[key, &nonce.0, b"session"])
}
