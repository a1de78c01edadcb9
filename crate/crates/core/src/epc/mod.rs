//! Packet-core functions as software network functions: subscriber
//! database, attach and session control, anchored gateways, policy and
//! charging.
//!
//! The data types and the per-function decision logic live here; the
//! message-driven node wrappers (`Mme`, `Sgw`, `Pgw`) react to
//! [`crate::proto::Msg`]s delivered by the engine and never touch each
//! other's state.

pub mod auth;
mod cdr;
mod gateway;
mod hss;
mod ip_pool;
mod mme;
mod pcef;
mod pcrf;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::NodeId;
use crate::ids::{FlowId, WapId};

pub use cdr::{Breakout, CdrLog, ChargingRecord};
pub use gateway::{Charging, Pgw, Sgw, Verdict};
pub use hss::{AuthVector, Hss};
pub use ip_pool::IpPool;
pub use mme::{Mme, PendingAttach};
pub use pcef::{Direction, Enforcement, Pcef, PacketInfo};
pub use pcrf::{FlowPattern, PolicyAction, PolicyRule, Pcrf};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum EpcError {
    #[error("subscriber {0} is not registered")]
    SubscriberUnknown(String),
    #[error("subscriber {0} is already registered")]
    DuplicateSubscriber(String),
    #[error("invalid IMSI `{0}`: expected 15 digits")]
    InvalidImsi(String),
    #[error("subscriber needs a SIM key or a password credential")]
    NoCredential,
    #[error("UE is already attached to this access point")]
    AlreadyAttached,
    #[error("authentication failed")]
    AuthenticationFailed,
    #[error("access point is at capacity")]
    WapAtCapacity,
    #[error("address pool exhausted")]
    PoolExhausted,
    #[error("invalid address pool `{0}`")]
    InvalidPool(String),
}

/// 15-digit subscriber identity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Imsi(String);

impl Imsi {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl FromStr for Imsi {
    type Err = EpcError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() == 15 && s.bytes().all(|b| b.is_ascii_digit()) {
            Ok(Imsi(s.to_string()))
        } else {
            Err(EpcError::InvalidImsi(s.to_string()))
        }
    }
}

impl fmt::Display for Imsi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ServiceClass {
    Voice,
    Video,
    Data,
    /// The class granted by the fallback rule.
    BestEffort,
    /// Anything the operator has no rule for.
    Other(String),
}

impl FromStr for ServiceClass {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "voice" => ServiceClass::Voice,
            "video" => ServiceClass::Video,
            "data" => ServiceClass::Data,
            "best-effort" => ServiceClass::BestEffort,
            other => ServiceClass::Other(other.to_string()),
        })
    }
}

impl fmt::Display for ServiceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ServiceClass::Voice => f.write_str("voice"),
            ServiceClass::Video => f.write_str("video"),
            ServiceClass::Data => f.write_str("data"),
            ServiceClass::BestEffort => f.write_str("best-effort"),
            ServiceClass::Other(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QosSubscription {
    pub max_bitrate_bps: u64,
    pub allowed_classes: BTreeSet<ServiceClass>,
}

impl Default for QosSubscription {
    fn default() -> Self {
        Self {
            max_bitrate_bps: 1_000_000_000,
            allowed_classes: [ServiceClass::Voice, ServiceClass::Video, ServiceClass::Data]
                .into_iter()
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PasswordCredential {
    pub username: String,
    pub password: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriberProfile {
    pub imsi: Imsi,
    pub shared_key: Option<Vec<u8>>,
    pub password_credential: Option<PasswordCredential>,
    pub qos_subscription: QosSubscription,
    pub roaming_consortia: BTreeSet<String>,
    pub home_domain: String,
}

impl SubscriberProfile {
    pub fn new(
        imsi: Imsi,
        shared_key: Option<Vec<u8>>,
        password_credential: Option<PasswordCredential>,
    ) -> Result<Self, EpcError> {
        if shared_key.is_none() && password_credential.is_none() {
            return Err(EpcError::NoCredential);
        }
        Ok(Self {
            imsi,
            shared_key,
            password_credential,
            qos_subscription: QosSubscription::default(),
            roaming_consortia: BTreeSet::new(),
            home_domain: "home.example".to_string(),
        })
    }

    /// NAI realm the subscriber's credentials belong to.
    pub fn nai_realm(&self) -> &str {
        &self.home_domain
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UeState {
    Detached,
    Authenticating,
    Attached,
    Connected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BearerId(pub u32);

impl fmt::Display for BearerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bearer {
    pub id: BearerId,
    pub ue: NodeId,
    pub qos_class: ServiceClass,
    pub anchor_sgw: NodeId,
    pub pgw: NodeId,
}

/// Which of a terminal's two radios an access point occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RadioSlot {
    /// Cellular, UAV and satellite access.
    WideArea,
    /// Wi-Fi.
    Local,
}

/// Per-UE attachment state as tracked by the MME.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UeContext {
    pub ue: NodeId,
    pub imsi: Imsi,
    pub state: UeState,
    /// `wap → secure`.
    pub attachments: BTreeMap<WapId, bool>,
    pub ip: Option<Ipv4Addr>,
    pub bearers: Vec<Bearer>,
}

impl UeContext {
    pub fn new(ue: NodeId, imsi: Imsi) -> Self {
        Self {
            ue,
            imsi,
            state: UeState::Detached,
            attachments: BTreeMap::new(),
            ip: None,
            bearers: Vec::new(),
        }
    }

    /// Checks the structural invariants, given each attachment's radio slot.
    pub fn check(&self, slot_of: impl Fn(WapId) -> RadioSlot) -> Result<(), String> {
        let attached = matches!(self.state, UeState::Attached | UeState::Connected);
        if attached && self.ip.is_none() {
            return Err(format!("{} is {:?} without an address", self.ue, self.state));
        }
        if self.attachments.is_empty() != (self.state == UeState::Detached) {
            return Err(format!(
                "{} is {:?} with {} attachments",
                self.ue,
                self.state,
                self.attachments.len()
            ));
        }
        for slot in [RadioSlot::WideArea, RadioSlot::Local] {
            let n = self.attachments.keys().filter(|&&w| slot_of(w) == slot).count();
            if n > 1 {
                return Err(format!("{} holds {n} {slot:?} attachments", self.ue));
            }
        }
        Ok(())
    }
}

/// Where a flow's remote end lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Destination {
    Internet,
    /// A host on the access point's local network.
    Local,
}

impl fmt::Display for Destination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Destination::Internet => "internet",
            Destination::Local => "local",
        })
    }
}

/// What the policy function sees of a flow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowDescriptor {
    pub id: FlowId,
    pub name: String,
    pub imsi: Imsi,
    pub ue_ip: Option<Ipv4Addr>,
    pub destination: Destination,
    pub class: ServiceClass,
    pub requested_bps: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn imsi_must_be_fifteen_digits() {
        assert!("001010000000001".parse::<Imsi>().is_ok());
        assert!("00101000000001".parse::<Imsi>().is_err());
        assert!("00101000000000x".parse::<Imsi>().is_err());
    }

    #[test]
    fn profile_needs_a_credential() {
        let imsi: Imsi = "001010000000001".parse().unwrap();
        assert_eq!(
            SubscriberProfile::new(imsi.clone(), None, None),
            Err(EpcError::NoCredential)
        );
        assert!(SubscriberProfile::new(imsi, Some(vec![1]), None).is_ok());
    }

    #[test]
    fn context_invariants() {
        let imsi: Imsi = "001010000000001".parse().unwrap();
        let mut ctx = UeContext::new(NodeId(1), imsi);
        let slot = |w: WapId| if w.0 < 10 { RadioSlot::WideArea } else { RadioSlot::Local };
        assert!(ctx.check(slot).is_ok());
        ctx.state = UeState::Attached;
        assert!(ctx.check(slot).is_err());
        ctx.attachments.insert(WapId(1), true);
        ctx.ip = Some(Ipv4Addr::new(10, 0, 0, 2));
        assert!(ctx.check(slot).is_ok());
        ctx.attachments.insert(WapId(11), true);
        assert!(ctx.check(slot).is_ok());
        ctx.attachments.insert(WapId(2), true);
        assert!(ctx.check(slot).is_err());
    }
}
