use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use crate::controller::{GlobalView, ScaleAction, SchedulerId, SouthboundError};
use crate::discovery::{AnqpElement, DiscoveryError, EapMethod};
use crate::engine::NodeId;
use crate::epc::auth::{Digest32, Nonce};
use crate::epc::{BearerId, Imsi, ServiceClass, UeState};
use crate::ids::{FlowId, WapId};
use crate::mobility::{Route, SubflowId};

/// Protocol outcomes worth checking after a run. Each one is also written
/// to the trace.
#[derive(Debug, Clone, PartialEq)]
pub enum Audit {
    /// A directive could not be carried out; the run exits nonzero.
    Error(String),
    AnqpExchange {
        ue: NodeId,
        wap: WapId,
        requested: BTreeSet<AnqpElement>,
        answered: Result<BTreeSet<AnqpElement>, DiscoveryError>,
    },
    NetworkSelected {
        ue: NodeId,
        wap: Option<WapId>,
    },
    AuthSucceeded {
        ue: NodeId,
        wap: WapId,
        imsi: Imsi,
        method: EapMethod,
        nonce: Nonce,
        /// The SIM answer the MME accepted.
        response: Option<Digest32>,
        session_key: Digest32,
    },
    AuthFailed {
        ue: NodeId,
        wap: WapId,
        reason: String,
    },
    Attached {
        ue: NodeId,
        wap: WapId,
        ip: Ipv4Addr,
        anchor_sgw: NodeId,
        state: UeState,
    },
    AttachRejected {
        ue: NodeId,
        wap: WapId,
        reason: String,
    },
    BearerCreated {
        ue: NodeId,
        bearer: BearerId,
        class: ServiceClass,
        anchor_sgw: NodeId,
        pgw: NodeId,
    },
    HandoverStarted {
        ue: NodeId,
        source: WapId,
        target: WapId,
    },
    HandoverCompleted {
        ue: NodeId,
        source: WapId,
        target: WapId,
        ip: Ipv4Addr,
        anchor_sgw: NodeId,
    },
    HandoverRejected {
        ue: NodeId,
        target: WapId,
        reason: String,
    },
    /// Packets an access point sent onwards after their terminal left.
    Forwarded {
        wap: WapId,
        ue: NodeId,
        packets: u64,
    },
    FlowOpened {
        flow: FlowId,
        ue: NodeId,
        interface: WapId,
        route: Route,
    },
    FlowRebound {
        flow: FlowId,
        interface: WapId,
        route: Route,
    },
    FlowRejected {
        flow: FlowId,
        reason: String,
    },
    FlowFinished {
        flow: FlowId,
        sent_bytes: u64,
    },
    PathFailed {
        flow: FlowId,
        subflow: SubflowId,
    },
    AllPathsFailed {
        flow: FlowId,
    },
    Southbound {
        corr: u64,
        wap: WapId,
        command: &'static str,
        result: Result<(), SouthboundError>,
    },
    PolicyInstalled {
        wap: WapId,
        version: u64,
        scheduler: SchedulerId,
    },
    Scaled {
        action: ScaleAction,
        instance: NodeId,
    },
    ViewExported(Box<GlobalView>),
    Rebalanced {
        objective: Option<i128>,
        greedy_objective: i128,
        moves: u32,
    },
}
