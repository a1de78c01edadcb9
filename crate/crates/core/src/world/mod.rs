//! The simulated network: every entity as an engine node, wired together
//! by links, and driven by scenario directives.
//!
//! Nodes never share state. A node's handler sees only the message in hand
//! and writes its reactions (sends, timers, audit entries, charging
//! records) into an [`Outbox`] that the world then applies to the engine.

mod audit;
mod config;
mod controller_node;
mod endpoint;
mod lgw;
mod net;
mod ue;
mod vnf;
mod wap;

use std::collections::BTreeMap;

use crate::controller::{ScaleAction, VnfKind};
use crate::discovery::AccessType;
use crate::engine::{NodeId, SimTime};
use crate::epc::ChargingRecord;
use crate::ids::WapId;
use crate::proto::{Msg, Tick};

pub use audit::Audit;
pub use config::{Config, ConfigError, CONFIG_KEYS};
pub use controller_node::{ControllerNode, PolicyRequest};
pub use endpoint::{Endpoint, FlowState, ServerFlow};
pub use lgw::Lgw;
pub use net::{
    CdrTotals, EventCounts, FlowSummary, Node, RunSummary, SubflowSummary, WapSummary, World,
};
pub use ue::{FlowRequest, UeFlow, UeInterface, UeNode};
pub use vnf::{VnfFunc, VnfNode};
pub use wap::WapNode;

/// Directives are timers addressed to this pseudo-node.
pub const WORLD: NodeId = NodeId(0);
pub const SWITCH: NodeId = NodeId(1);
pub const INTERNET: NodeId = NodeId(2);
pub const CONTROLLER: NodeId = NodeId(3);
/// First id handed to network-function instances.
pub const FIRST_VNF: NodeId = NodeId(4);
pub const WAP_BASE: u32 = 1000;
pub const LGW_BASE: u32 = 2000;
pub const UE_BASE: u32 = 10_000;

/// Where a node wants a message to go.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Address {
    Node(NodeId),
    /// Any live instance of a network function, round-robin.
    Service(VnfKind),
    /// The MME instance holding this terminal's context.
    Mme(NodeId),
}

impl From<NodeId> for Address {
    fn from(n: NodeId) -> Self {
        Address::Node(n)
    }
}

impl From<WapId> for Address {
    fn from(w: WapId) -> Self {
        Address::Node(w.node())
    }
}

#[derive(Debug)]
pub(crate) enum Out {
    Send {
        to: Address,
        msg: Msg,
        depart: Option<SimTime>,
    },
    Timer {
        at: SimTime,
        tick: Tick,
    },
    Audit(Audit),
    Cdr(ChargingRecord),
    Scale(ScaleAction),
}

/// A handler's reactions, applied in order once it returns.
#[derive(Debug, Default)]
pub struct Outbox {
    pub(crate) items: Vec<Out>,
}

impl Outbox {
    pub fn send(&mut self, to: impl Into<Address>, msg: Msg) {
        self.items.push(Out::Send {
            to: to.into(),
            msg,
            depart: None,
        });
    }

    pub fn timer(&mut self, at: SimTime, tick: Tick) {
        self.items.push(Out::Timer { at, tick });
    }

    pub fn audit(&mut self, a: Audit) {
        self.items.push(Out::Audit(a));
    }

    pub fn cdr(&mut self, r: ChargingRecord) {
        self.items.push(Out::Cdr(r));
    }

    pub fn scale(&mut self, a: ScaleAction) {
        self.items.push(Out::Scale(a));
    }
}

/// Static facts about access points that terminals can look up.
#[derive(Debug, Clone, PartialEq)]
pub struct WapInfo {
    pub access: AccessType,
    pub lgw: Option<NodeId>,
    pub quality: f64,
    pub capacity_bps: u64,
}

/// Read-only view of the world handed to every handler.
#[derive(Debug, Default)]
pub struct Directory {
    pub ues: Vec<NodeId>,
    pub waps: BTreeMap<WapId, WapInfo>,
}

pub struct Ctx<'a> {
    pub now: SimTime,
    pub me: NodeId,
    pub config: &'a Config,
    pub dir: &'a Directory,
}
