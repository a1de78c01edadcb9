//! Terminal mobility: anchored handover admission, per-flow interface
//! binding, local breakout and multipath transport.

mod mptcp;
mod reassembly;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::NodeId;
use crate::epc::{Destination, RadioSlot, ServiceClass};
use crate::ids::{FlowId, WapId};

pub use mptcp::{
    mptcp_on_path_failure, mptcp_open, mptcp_schedule, MultipathConnection, Segment, Subflow,
    SubflowId, SubflowState,
};
pub use reassembly::Reassembly;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum MobilityError {
    #[error("terminal is not attached to {0}")]
    InterfaceNotAttached(WapId),
    #[error("a multipath connection needs at least one interface")]
    NoInterfaces,
    #[error("every path of the connection has failed")]
    AllPathsFailed,
    #[error("handover target cannot take the load")]
    HandoverRejected,
    #[error("terminal is not attached")]
    NotAttached,
}

/// Where a flow leaves the access network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Route {
    /// Through the serving and PDN gateways.
    Core,
    /// Straight out of the local gateway next to the access point.
    Local { lgw: NodeId },
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Route::Core => f.write_str("core"),
            Route::Local { lgw } => write!(f, "local@{lgw}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalGateway {
    pub id: NodeId,
    pub host_wap: WapId,
    pub egress: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowBinding {
    pub flow_id: FlowId,
    pub ue: NodeId,
    pub interface: WapId,
    pub route: Route,
    /// Next in-order byte the receiver expects; survives rebinding.
    pub cursor: u64,
}

/// Which flows may bypass the core.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffloadPolicy {
    /// Internet-bound classes that may break out locally.
    pub classes: BTreeSet<ServiceClass>,
    /// Whether flows to the access point's own local network break out.
    pub local_destinations: bool,
}

impl Default for OffloadPolicy {
    fn default() -> Self {
        Self {
            classes: BTreeSet::new(),
            local_destinations: true,
        }
    }
}

impl OffloadPolicy {
    pub fn eligible(&self, class: &ServiceClass, destination: Destination) -> bool {
        match destination {
            Destination::Local => self.local_destinations,
            Destination::Internet => self.classes.contains(class),
        }
    }
}

/// Local breakout decision for a flow bound to an interface.
pub fn sipto_breakout(
    class: &ServiceClass,
    destination: Destination,
    policy: &OffloadPolicy,
    lgw_at_interface: Option<NodeId>,
) -> Route {
    match lgw_at_interface {
        Some(lgw) if policy.eligible(class, destination) => Route::Local { lgw },
        _ => Route::Core,
    }
}

/// Binds `flow_id` to `interface`, keeping the reassembly cursor and route
/// of any previous binding.
pub fn ifom_bind_flow(
    attachments: &BTreeMap<WapId, bool>,
    current: Option<&FlowBinding>,
    flow_id: FlowId,
    ue: NodeId,
    interface: WapId,
) -> Result<FlowBinding, MobilityError> {
    if !attachments.contains_key(&interface) {
        return Err(MobilityError::InterfaceNotAttached(interface));
    }
    Ok(FlowBinding {
        flow_id,
        ue,
        interface,
        route: current.map_or(Route::Core, |b| b.route),
        cursor: current.map_or(0, |b| b.cursor),
    })
}

/// Terminal-side interface preference per service class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IfomPolicy {
    pub prefer: BTreeMap<ServiceClass, RadioSlot>,
    pub fallback: RadioSlot,
}

impl Default for IfomPolicy {
    fn default() -> Self {
        Self {
            prefer: [
                (ServiceClass::Voice, RadioSlot::WideArea),
                (ServiceClass::Video, RadioSlot::Local),
                (ServiceClass::Data, RadioSlot::Local),
            ]
            .into(),
            fallback: RadioSlot::WideArea,
        }
    }
}

impl IfomPolicy {
    /// Preferred attached interface for `class`; any attachment if the
    /// preferred radio is not connected.
    pub fn choose(
        &self,
        class: &ServiceClass,
        attachments: &BTreeMap<WapId, RadioSlot>,
    ) -> Option<WapId> {
        let want = self.prefer.get(class).copied().unwrap_or(self.fallback);
        attachments
            .iter()
            .find(|(_, s)| **s == want)
            .or_else(|| attachments.iter().next())
            .map(|(w, _)| *w)
    }
}

/// Target-side admission: the moved demand must fit next to what the
/// target already carries.
pub fn admit_handover(
    target_load_bps: u64,
    moved_demand_bps: u64,
    target_capacity_bps: u64,
) -> Result<(), MobilityError> {
    if target_capacity_bps > 0
        && u128::from(target_load_bps) + u128::from(moved_demand_bps)
            <= u128::from(target_capacity_bps)
    {
        Ok(())
    } else {
        Err(MobilityError::HandoverRejected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attached(ws: &[u32]) -> BTreeMap<WapId, bool> {
        ws.iter().map(|&w| (WapId(w), true)).collect()
    }

    #[test]
    fn bind_requires_attachment() {
        let a = attached(&[1, 2]);
        let b = ifom_bind_flow(&a, None, FlowId(1), NodeId(9), WapId(2)).unwrap();
        assert_eq!(b.interface, WapId(2));
        assert_eq!(
            ifom_bind_flow(&a, None, FlowId(1), NodeId(9), WapId(3)),
            Err(MobilityError::InterfaceNotAttached(WapId(3)))
        );
    }

    #[test]
    fn rebinding_keeps_cursor() {
        let a = attached(&[1, 2]);
        let mut b = ifom_bind_flow(&a, None, FlowId(1), NodeId(9), WapId(1)).unwrap();
        b.cursor = 4_500;
        let r = ifom_bind_flow(&a, Some(&b), FlowId(1), NodeId(9), WapId(2)).unwrap();
        assert_eq!(r.cursor, 4_500);
    }

    #[test]
    fn breakout_rules() {
        let mut policy = OffloadPolicy::default();
        policy.classes.insert(ServiceClass::Video);
        let lgw = Some(NodeId(7));
        assert_eq!(
            sipto_breakout(&ServiceClass::Video, Destination::Internet, &policy, lgw),
            Route::Local { lgw: NodeId(7) }
        );
        assert_eq!(
            sipto_breakout(&ServiceClass::Voice, Destination::Internet, &policy, lgw),
            Route::Core
        );
        assert_eq!(
            sipto_breakout(&ServiceClass::Video, Destination::Internet, &policy, None),
            Route::Core
        );
        assert_eq!(
            sipto_breakout(&ServiceClass::Voice, Destination::Local, &policy, lgw),
            Route::Local { lgw: NodeId(7) }
        );
    }

    #[test]
    fn ifom_preference() {
        let p = IfomPolicy::default();
        let both: BTreeMap<_, _> =
            [(WapId(1), RadioSlot::WideArea), (WapId(2), RadioSlot::Local)].into();
        assert_eq!(p.choose(&ServiceClass::Video, &both), Some(WapId(2)));
        assert_eq!(p.choose(&ServiceClass::Voice, &both), Some(WapId(1)));
        let lte: BTreeMap<_, _> = [(WapId(1), RadioSlot::WideArea)].into();
        assert_eq!(p.choose(&ServiceClass::Video, &lte), Some(WapId(1)));
    }

    #[test]
    fn admission() {
        assert!(admit_handover(60, 40, 100).is_ok());
        assert_eq!(admit_handover(61, 40, 100), Err(MobilityError::HandoverRejected));
        assert_eq!(admit_handover(0, 0, 0), Err(MobilityError::HandoverRejected));
    }
}
