use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Destination, EpcError, FlowDescriptor, Imsi, QosSubscription, ServiceClass};

/// Flow match. `None` fields are wildcards; more concrete fields make a
/// longer match.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowPattern {
    pub source: Option<Imsi>,
    pub destination: Option<Destination>,
    pub class: Option<ServiceClass>,
}

impl FlowPattern {
    pub fn matches(&self, flow: &FlowDescriptor) -> bool {
        self.source.as_ref().is_none_or(|s| *s == flow.imsi)
            && self.destination.is_none_or(|d| d == flow.destination)
            && self.class.as_ref().is_none_or(|c| *c == flow.class)
    }

    pub fn specificity(&self) -> usize {
        usize::from(self.source.is_some())
            + usize::from(self.destination.is_some())
            + usize::from(self.class.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyAction {
    Forward,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRule {
    pub pattern: FlowPattern,
    pub qos_class: ServiceClass,
    pub max_bitrate_bps: u64,
    pub charging_rate_id: String,
    pub action: PolicyAction,
}

impl PolicyRule {
    pub fn best_effort() -> Self {
        Self {
            pattern: FlowPattern::default(),
            qos_class: ServiceClass::BestEffort,
            max_bitrate_bps: u64::MAX,
            charging_rate_id: "be".to_string(),
            action: PolicyAction::Forward,
        }
    }

    fn for_class(class: ServiceClass, tariff: &str) -> Self {
        Self {
            pattern: FlowPattern {
                class: Some(class.clone()),
                ..FlowPattern::default()
            },
            qos_class: class,
            max_bitrate_bps: u64::MAX,
            charging_rate_id: tariff.to_string(),
            action: PolicyAction::Forward,
        }
    }
}

/// Policy decision point.
///
/// Rule precedence is longest match (most concrete pattern fields), ties
/// going to the earlier-installed rule; the best-effort rule is always
/// available as the fallback.
#[derive(Debug, Clone)]
pub struct Pcrf {
    rules: Vec<PolicyRule>,
    fallback: PolicyRule,
    subscriptions: BTreeMap<Imsi, QosSubscription>,
}

impl Default for Pcrf {
    fn default() -> Self {
        Self {
            rules: vec![
                PolicyRule::for_class(ServiceClass::Voice, "voice"),
                PolicyRule::for_class(ServiceClass::Video, "video"),
                PolicyRule::for_class(ServiceClass::Data, "data"),
            ],
            fallback: PolicyRule::best_effort(),
            subscriptions: BTreeMap::new(),
        }
    }
}

impl Pcrf {
    pub fn install(&mut self, rule: PolicyRule) {
        self.rules.push(rule);
    }

    pub fn provision(&mut self, imsi: Imsi, qos: QosSubscription) {
        self.subscriptions.insert(imsi, qos);
    }

    pub fn rules(&self) -> &[PolicyRule] {
        &self.rules
    }

    /// Decision for `flow` against the provisioned subscription.
    pub fn authorize(&self, flow: &FlowDescriptor) -> Result<PolicyRule, EpcError> {
        let qos = self
            .subscriptions
            .get(&flow.imsi)
            .ok_or_else(|| EpcError::SubscriberUnknown(flow.imsi.to_string()))?;
        Ok(self.authorize_with(flow, qos))
    }

    /// The granted bitrate is `min(requested, rule cap, subscribed max)`; a
    /// class the subscription does not allow falls back to best effort.
    pub fn authorize_with(&self, flow: &FlowDescriptor, qos: &QosSubscription) -> PolicyRule {
        let mut best: Option<&PolicyRule> = None;
        for rule in self.rules.iter().filter(|r| r.pattern.matches(flow)) {
            if best.is_none_or(|b| rule.pattern.specificity() > b.pattern.specificity()) {
                best = Some(rule);
            }
        }
        let chosen = match best {
            Some(rule) if qos.allowed_classes.contains(&rule.qos_class) => rule,
            _ => &self.fallback,
        };
        let mut granted = chosen.clone();
        granted.max_bitrate_bps = chosen
            .max_bitrate_bps
            .min(qos.max_bitrate_bps)
            .min(flow.requested_bps);
        granted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::FlowId;
    use proptest::prelude::*;

    fn flow(class: &str, bps: u64) -> FlowDescriptor {
        FlowDescriptor {
            id: FlowId(1),
            name: "f".into(),
            imsi: "001010000000001".parse().unwrap(),
            ue_ip: None,
            destination: Destination::Internet,
            class: class.parse().unwrap(),
            requested_bps: bps,
        }
    }

    fn pcrf(max: u64) -> Pcrf {
        let mut p = Pcrf::default();
        p.provision(
            "001010000000001".parse().unwrap(),
            QosSubscription {
                max_bitrate_bps: max,
                ..QosSubscription::default()
            },
        );
        p
    }

    #[test]
    fn direct_grant() {
        let rule = pcrf(10_000_000).authorize(&flow("video", 10_000_000)).unwrap();
        assert_eq!(rule.qos_class, ServiceClass::Video);
        assert_eq!(rule.max_bitrate_bps, 10_000_000);
        assert_eq!(rule.charging_rate_id, "video");
        assert_eq!(rule.action, PolicyAction::Forward);
    }

    #[test]
    fn bitrate_is_clamped_to_subscription() {
        let rule = pcrf(10_000_000).authorize(&flow("video", 50_000_000)).unwrap();
        assert_eq!(rule.qos_class, ServiceClass::Video);
        assert_eq!(rule.max_bitrate_bps, 10_000_000);
    }

    #[test]
    fn unknown_class_gets_best_effort() {
        let rule = pcrf(10_000_000).authorize(&flow("gaming", 1_000)).unwrap();
        assert_eq!(rule.qos_class, ServiceClass::BestEffort);
        assert_eq!(rule.charging_rate_id, "be");
    }

    #[test]
    fn unknown_subscriber() {
        let p = Pcrf::default();
        assert!(matches!(
            p.authorize(&flow("video", 1)),
            Err(EpcError::SubscriberUnknown(_))
        ));
    }

    #[test]
    fn longest_match_wins() {
        let mut p = pcrf(u64::MAX);
        p.install(PolicyRule {
            pattern: FlowPattern {
                destination: Some(Destination::Internet),
                class: Some(ServiceClass::Video),
                ..FlowPattern::default()
            },
            qos_class: ServiceClass::Video,
            max_bitrate_bps: 2_000_000,
            charging_rate_id: "video-internet".into(),
            action: PolicyAction::Forward,
        });
        let rule = p.authorize(&flow("video", 5_000_000)).unwrap();
        assert_eq!(rule.charging_rate_id, "video-internet");
        assert_eq!(rule.max_bitrate_bps, 2_000_000);
    }

    proptest! {
        #[test]
        fn grant_never_exceeds_subscription(
            max in 0u64..1_000_000_000,
            req in 0u64..2_000_000_000,
            class in prop::sample::select(vec!["voice", "video", "data", "gaming"]),
            allow_mask in 0u8..8,
        ) {
            let mut p = Pcrf::default();
            let classes = [ServiceClass::Voice, ServiceClass::Video, ServiceClass::Data];
            let qos = QosSubscription {
                max_bitrate_bps: max,
                allowed_classes: classes
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| allow_mask & (1 << i) != 0)
                    .map(|(_, c)| c.clone())
                    .collect(),
            };
            p.provision("001010000000001".parse().unwrap(), qos);
            let rule = p.authorize(&flow(class, req)).unwrap();
            prop_assert!(rule.max_bitrate_bps <= max);
            prop_assert!(rule.max_bitrate_bps <= req);
        }
    }
}
