//! Access-point discovery and selection: beacons, pre-association ANQP
//! queries, credential matching and the EAP-SIM / EAP-TTLS exchanges.

mod eap;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::epc::{RadioSlot, SubscriberProfile};
use crate::ids::WapId;

pub use eap::{
    eap_sim_authenticate, eap_ttls_authenticate, sim_peer_response, AuthSuccess, Certificate,
    EapMessage, ServerStep, SimServer, TrustList, TtlsPeer, TtlsServer,
};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum DiscoveryError {
    #[error("access point does not speak ANQP")]
    AnqpUnsupported,
    #[error("ANQP query names no elements")]
    InvalidQuery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Error, Serialize, Deserialize)]
pub enum AuthError {
    #[error("no credential for the requested EAP method")]
    MethodUnavailable,
    #[error("authentication failed")]
    AuthenticationFailed,
    #[error("server certificate rejected")]
    CertificateInvalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AccessType {
    Cellular,
    WiFi,
    Uav,
    Satellite,
}

impl AccessType {
    pub const ALL: [AccessType; 4] = [
        AccessType::Cellular,
        AccessType::WiFi,
        AccessType::Uav,
        AccessType::Satellite,
    ];

    pub fn slot(self) -> RadioSlot {
        match self {
            AccessType::WiFi => RadioSlot::Local,
            _ => RadioSlot::WideArea,
        }
    }

    /// One-way radio latency used unless the scenario overrides it.
    pub fn default_latency_us(self) -> u64 {
        match self {
            AccessType::Cellular => 1_000,
            AccessType::WiFi => 500,
            AccessType::Uav => 2_000,
            AccessType::Satellite => 20_000,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AccessType::Cellular => "cellular",
            AccessType::WiFi => "wifi",
            AccessType::Uav => "uav",
            AccessType::Satellite => "satellite",
        }
    }
}

impl fmt::Display for AccessType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AccessType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AccessType::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown access type `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EapMethod {
    Sim,
    Ttls,
}

impl fmt::Display for EapMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EapMethod::Sim => "EAP-SIM",
            EapMethod::Ttls => "EAP-TTLS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnqpElement {
    DomainName,
    IpAvailability,
    EapMethods,
    RoamingConsortium,
    NaiRealmList,
    NetworkAuthType,
}

impl AnqpElement {
    pub const ALL: [AnqpElement; 6] = [
        AnqpElement::DomainName,
        AnqpElement::IpAvailability,
        AnqpElement::EapMethods,
        AnqpElement::RoamingConsortium,
        AnqpElement::NaiRealmList,
        AnqpElement::NetworkAuthType,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetworkAuthType {
    /// Straight to EAP, nothing to accept first.
    None,
    AcceptTerms,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnqpValue {
    DomainName(Vec<String>),
    IpAvailability { ipv4: bool, ipv6: bool },
    EapMethods(Vec<EapMethod>),
    RoamingConsortium(Vec<String>),
    NaiRealmList(Vec<String>),
    NetworkAuthType(NetworkAuthType),
}

impl AnqpValue {
    pub fn element(&self) -> AnqpElement {
        match self {
            AnqpValue::DomainName(_) => AnqpElement::DomainName,
            AnqpValue::IpAvailability { .. } => AnqpElement::IpAvailability,
            AnqpValue::EapMethods(_) => AnqpElement::EapMethods,
            AnqpValue::RoamingConsortium(_) => AnqpElement::RoamingConsortium,
            AnqpValue::NaiRealmList(_) => AnqpElement::NaiRealmList,
            AnqpValue::NetworkAuthType(_) => AnqpElement::NetworkAuthType,
        }
    }
}

/// What an access point is willing to tell before association.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnqpDataSet {
    elements: BTreeMap<AnqpElement, AnqpValue>,
}

impl AnqpDataSet {
    pub fn with(mut self, value: AnqpValue) -> Self {
        self.insert(value);
        self
    }

    pub fn insert(&mut self, value: AnqpValue) {
        self.elements.insert(value.element(), value);
    }

    pub fn get(&self, element: AnqpElement) -> Option<&AnqpValue> {
        self.elements.get(&element)
    }

    pub fn tags(&self) -> BTreeSet<AnqpElement> {
        self.elements.keys().copied().collect()
    }

    /// A data set advertising every element kind.
    pub fn operator(domain: &str, consortia: &[String], realms: &[String]) -> Self {
        AnqpDataSet::default()
            .with(AnqpValue::DomainName(vec![domain.to_string()]))
            .with(AnqpValue::IpAvailability {
                ipv4: true,
                ipv6: false,
            })
            .with(AnqpValue::EapMethods(vec![EapMethod::Sim, EapMethod::Ttls]))
            .with(AnqpValue::RoamingConsortium(consortia.to_vec()))
            .with(AnqpValue::NaiRealmList(realms.to_vec()))
            .with(AnqpValue::NetworkAuthType(NetworkAuthType::None))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnqpQuery {
    pub elements: BTreeSet<AnqpElement>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnqpResponse {
    pub elements: BTreeMap<AnqpElement, AnqpValue>,
}

impl AnqpResponse {
    pub fn tags(&self) -> BTreeSet<AnqpElement> {
        self.elements.keys().copied().collect()
    }
}

/// The set of radio processing units in an access point and which of them
/// are switched on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommCores {
    pub total: u32,
    pub active: BTreeSet<u32>,
}

impl CommCores {
    pub fn all_on(total: u32) -> Self {
        Self {
            total,
            active: (0..total).collect(),
        }
    }
}

/// An access point of any radio technology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wap {
    pub id: WapId,
    pub access_type: AccessType,
    /// Nominal capacity with every comm-core on.
    pub capacity_bps: u64,
    pub current_load_bps: u64,
    pub hs20_capable: bool,
    pub advertised: AnqpDataSet,
    pub comm_cores: CommCores,
    /// Scenario-assigned radio quality seen by terminals, in (0, 1].
    pub link_quality: f64,
}

impl Wap {
    pub fn new(id: WapId, access_type: AccessType, capacity_bps: u64, cores: u32) -> Self {
        Self {
            id,
            access_type,
            capacity_bps,
            current_load_bps: 0,
            hs20_capable: false,
            advertised: AnqpDataSet::default(),
            comm_cores: CommCores::all_on(cores.max(1)),
            link_quality: 1.0,
        }
    }

    /// Capacity scaled by the fraction of comm-cores that are active.
    pub fn effective_capacity_bps(&self) -> u64 {
        let active = self.comm_cores.active.len() as u128;
        let total = u128::from(self.comm_cores.total.max(1));
        (u128::from(self.capacity_bps) * active / total) as u64
    }

    pub fn is_on_air(&self) -> bool {
        !self.comm_cores.active.is_empty()
    }

    pub fn load_fraction(&self) -> f64 {
        let cap = self.effective_capacity_bps();
        if cap == 0 {
            1.0
        } else {
            self.current_load_bps as f64 / cap as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beacon {
    pub wap: WapId,
    pub access_type: AccessType,
    /// Extended-beacon interworking flag; set iff the AP is Hotspot 2.0.
    pub interworking: bool,
    pub timestamp: SimTime,
    /// BSS-load style hint: effective capacity and utilisation.
    pub capacity_bps: u64,
    pub load: f64,
}

/// One beacon, or nothing when every comm-core is off.
pub fn emit_beacon(wap: &Wap, now: SimTime) -> Option<Beacon> {
    wap.is_on_air().then(|| Beacon {
        wap: wap.id,
        access_type: wap.access_type,
        interworking: wap.hs20_capable,
        timestamp: now,
        capacity_bps: wap.effective_capacity_bps(),
        load: wap.load_fraction(),
    })
}

/// Answers a pre-association query with exactly the requested elements the
/// access point advertises.
pub fn anqp_query(wap: &Wap, query: &AnqpQuery) -> Result<AnqpResponse, DiscoveryError> {
    if !wap.hs20_capable {
        return Err(DiscoveryError::AnqpUnsupported);
    }
    if query.elements.is_empty() {
        return Err(DiscoveryError::InvalidQuery);
    }
    let elements = query
        .elements
        .iter()
        .filter_map(|tag| wap.advertised.get(*tag).map(|v| (*tag, v.clone())))
        .collect();
    Ok(AnqpResponse { elements })
}

/// Ordered weakest to strongest so that `Ord` ranks candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CredentialMatch {
    None,
    NaiRealm,
    RoamingConsortium,
    HomeDomain,
}

/// Strongest relation between a subscriber's credentials and what the
/// access point advertised.
pub fn credential_match(profile: &SubscriberProfile, anqp: &AnqpResponse) -> CredentialMatch {
    let listed = |tag, needle: &str| match anqp.elements.get(&tag) {
        Some(AnqpValue::DomainName(v))
        | Some(AnqpValue::RoamingConsortium(v))
        | Some(AnqpValue::NaiRealmList(v)) => v.iter().any(|s| s == needle),
        _ => false,
    };
    if listed(AnqpElement::DomainName, &profile.home_domain) {
        CredentialMatch::HomeDomain
    } else if profile
        .roaming_consortia
        .iter()
        .any(|c| listed(AnqpElement::RoamingConsortium, c))
    {
        CredentialMatch::RoamingConsortium
    } else if listed(AnqpElement::NaiRealmList, profile.nai_realm()) {
        CredentialMatch::NaiRealm
    } else {
        CredentialMatch::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCandidate {
    pub wap: WapId,
    pub access_type: AccessType,
    pub anqp: AnqpResponse,
    pub credential_match: CredentialMatch,
    pub link_quality: f64,
    /// Utilisation fraction taken from the beacon.
    pub load: f64,
}

impl NetworkCandidate {
    pub fn new(
        beacon: &Beacon,
        anqp: AnqpResponse,
        profile: &SubscriberProfile,
        link_quality: f64,
    ) -> Self {
        let credential_match = credential_match(profile, &anqp);
        Self {
            wap: beacon.wap,
            access_type: beacon.access_type,
            anqp,
            credential_match,
            link_quality,
            load: beacon.load,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    /// Weakest credential match still worth connecting to.
    pub min_match: CredentialMatch,
    /// Restrict to these technologies; empty means any.
    pub access_types: BTreeSet<AccessType>,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            min_match: CredentialMatch::NaiRealm,
            access_types: BTreeSet::new(),
        }
    }
}

fn rank(a: &NetworkCandidate, b: &NetworkCandidate) -> Ordering {
    b.credential_match
        .cmp(&a.credential_match)
        .then_with(|| b.link_quality.total_cmp(&a.link_quality))
        .then_with(|| a.load.total_cmp(&b.load))
        .then_with(|| a.wap.cmp(&b.wap))
}

/// EAP methods the subscriber holds a credential for.
pub fn usable_methods(profile: &SubscriberProfile) -> BTreeSet<EapMethod> {
    let mut m = BTreeSet::new();
    if profile.shared_key.is_some() {
        m.insert(EapMethod::Sim);
    }
    if profile.password_credential.is_some() {
        m.insert(EapMethod::Ttls);
    }
    m
}

/// Picks the best eligible candidate: strongest credential match, then
/// better link quality, then lower load, then lower id. A candidate that
/// advertises its EAP methods is only eligible if the subscriber can use
/// one of them.
pub fn select_network(
    candidates: &[NetworkCandidate],
    profile: &SubscriberProfile,
    policy: &SelectionPolicy,
) -> Option<WapId> {
    let floor = policy.min_match.max(CredentialMatch::NaiRealm);
    let usable = usable_methods(profile);
    candidates
        .iter()
        .filter(|c| c.credential_match >= floor)
        .filter(|c| policy.access_types.is_empty() || policy.access_types.contains(&c.access_type))
        .filter(|c| match c.anqp.elements.get(&AnqpElement::EapMethods) {
            Some(AnqpValue::EapMethods(m)) => m.iter().any(|m| usable.contains(m)),
            _ => true,
        })
        .min_by(|a, b| rank(a, b))
        .map(|c| c.wap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epc::Imsi;

    fn profile() -> SubscriberProfile {
        let imsi: Imsi = "001010000000001".parse().unwrap();
        let mut p = SubscriberProfile::new(imsi, Some(b"k".to_vec()), None).unwrap();
        p.roaming_consortia.insert("roam-1".into());
        p
    }

    fn hs20_wap(id: u32) -> Wap {
        let mut w = Wap::new(WapId(id), AccessType::WiFi, 100_000_000, 1);
        w.hs20_capable = true;
        w.advertised = AnqpDataSet::operator("visited.example", &["roam-1".into()], &[]);
        w
    }

    fn candidate(id: u32, m: CredentialMatch, load: f64) -> NetworkCandidate {
        NetworkCandidate {
            wap: WapId(id),
            access_type: AccessType::WiFi,
            anqp: AnqpResponse::default(),
            credential_match: m,
            link_quality: 1.0,
            load,
        }
    }

    #[test]
    fn beacon_flag_follows_capability() {
        let mut w = hs20_wap(1);
        assert!(emit_beacon(&w, SimTime::ZERO).unwrap().interworking);
        w.hs20_capable = false;
        assert!(!emit_beacon(&w, SimTime::ZERO).unwrap().interworking);
        w.comm_cores.active.clear();
        assert!(emit_beacon(&w, SimTime::ZERO).is_none());
    }

    #[test]
    fn anqp_returns_requested_advertised_elements() {
        let w = hs20_wap(1);
        let q = AnqpQuery {
            elements: [AnqpElement::RoamingConsortium, AnqpElement::NaiRealmList].into(),
        };
        let r = anqp_query(&w, &q).unwrap();
        assert_eq!(r.tags(), q.elements);
        assert_eq!(
            r.elements[&AnqpElement::RoamingConsortium],
            AnqpValue::RoamingConsortium(vec!["roam-1".into()])
        );
    }

    #[test]
    fn anqp_errors() {
        let mut w = hs20_wap(1);
        let empty = AnqpQuery {
            elements: BTreeSet::new(),
        };
        assert_eq!(anqp_query(&w, &empty), Err(DiscoveryError::InvalidQuery));
        w.hs20_capable = false;
        let q = AnqpQuery {
            elements: [AnqpElement::DomainName].into(),
        };
        assert_eq!(anqp_query(&w, &q), Err(DiscoveryError::AnqpUnsupported));
    }

    #[test]
    fn consortium_match_beats_no_match() {
        let p = profile();
        let w = hs20_wap(2);
        let q = AnqpQuery {
            elements: AnqpElement::ALL.into_iter().collect(),
        };
        let anqp = anqp_query(&w, &q).unwrap();
        assert_eq!(credential_match(&p, &anqp), CredentialMatch::RoamingConsortium);
        let cands = [
            candidate(1, CredentialMatch::None, 0.0),
            candidate(2, CredentialMatch::RoamingConsortium, 0.9),
        ];
        assert_eq!(select_network(&cands, &p, &SelectionPolicy::default()), Some(WapId(2)));
    }

    #[test]
    fn lower_load_breaks_ties() {
        let p = profile();
        let cands = [
            candidate(1, CredentialMatch::HomeDomain, 0.7),
            candidate(2, CredentialMatch::HomeDomain, 0.3),
        ];
        assert_eq!(select_network(&cands, &p, &SelectionPolicy::default()), Some(WapId(2)));
    }

    #[test]
    fn nothing_eligible() {
        let p = profile();
        let cands = [candidate(1, CredentialMatch::None, 0.0)];
        assert_eq!(select_network(&cands, &p, &SelectionPolicy::default()), None);
        assert_eq!(select_network(&[], &p, &SelectionPolicy::default()), None);
    }

    #[test]
    fn effective_capacity_scales_with_cores() {
        let mut w = Wap::new(WapId(1), AccessType::Cellular, 100_000_000, 4);
        w.comm_cores.active = [0, 1].into();
        assert_eq!(w.effective_capacity_bps(), 50_000_000);
    }
}
