use std::collections::BTreeMap;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::auth::{self, Digest32, Nonce};
use super::{EpcError, Imsi, SubscriberProfile};

/// What the HSS hands the authenticator for one challenge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthVector {
    pub profile: SubscriberProfile,
    pub nonce: Nonce,
    /// Expected answer to the challenge; absent for SIM-less subscribers.
    pub expected_response: Option<Digest32>,
    /// Key the authenticator installs after a successful SIM challenge.
    pub session_key: Option<Digest32>,
}

/// Subscriber database and authentication-vector source.
#[derive(Debug, Clone)]
pub struct Hss {
    subscribers: BTreeMap<Imsi, SubscriberProfile>,
    rng: ChaCha8Rng,
    issued: u64,
}

impl Hss {
    /// `rng` should be a named engine sub-stream so nonces replay per seed.
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self {
            subscribers: BTreeMap::new(),
            rng,
            issued: 0,
        }
    }

    pub fn register(&mut self, profile: SubscriberProfile) -> Result<(), EpcError> {
        if self.subscribers.contains_key(&profile.imsi) {
            return Err(EpcError::DuplicateSubscriber(profile.imsi.to_string()));
        }
        self.subscribers.insert(profile.imsi.clone(), profile);
        Ok(())
    }

    pub fn profile(&self, imsi: &Imsi) -> Option<&SubscriberProfile> {
        self.subscribers.get(imsi)
    }

    pub fn len(&self) -> usize {
        self.subscribers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subscribers.is_empty()
    }

    /// Returns the stored profile and a fresh challenge nonce.
    ///
    /// Nonces are 8 random bytes followed by a per-HSS issue counter, so no
    /// two lookups ever share one.
    pub fn lookup(&mut self, imsi: &Imsi) -> Result<(SubscriberProfile, Nonce), EpcError> {
        let profile = self
            .subscribers
            .get(imsi)
            .cloned()
            .ok_or_else(|| EpcError::SubscriberUnknown(imsi.to_string()))?;
        let mut bytes = [0u8; 16];
        self.rng.fill_bytes(&mut bytes[..8]);
        bytes[8..].copy_from_slice(&self.issued.to_be_bytes());
        self.issued += 1;
        Ok((profile, Nonce(bytes)))
    }

    pub fn auth_vector(&mut self, imsi: &Imsi) -> Result<AuthVector, EpcError> {
        let (profile, nonce) = self.lookup(imsi)?;
        let expected_response = profile
            .shared_key
            .as_deref()
            .map(|key| auth::challenge_response(key, &nonce));
        let session_key = profile
            .shared_key
            .as_deref()
            .map(|key| auth::session_key(key, &nonce));
        Ok(AuthVector {
            profile,
            nonce,
            expected_response,
            session_key,
        })
    }
}
