//! Everything that travels through the engine: control-plane messages
//! between nodes, user-plane packets and the timers nodes set themselves.

use std::collections::BTreeSet;
use std::fmt;
use std::net::Ipv4Addr;

use crate::controller::{SodaPolicy, SouthboundError, VnfReport, WapReport};
use crate::discovery::{
    AccessType, AnqpQuery, AnqpResponse, Beacon, DiscoveryError, EapMessage, EapMethod,
};
use crate::engine::NodeId;
use crate::epc::{AuthVector, EpcError, FlowDescriptor, Imsi, PolicyRule, ServiceClass};
use crate::ids::{FlowId, WapId};
use crate::mobility::{Route, Segment, SubflowId};

/// Payload bytes per data segment.
pub const MSS: u32 = 1500;
/// Per-packet header overhead on the wire.
pub const HEADER_BYTES: u64 = 40;
/// Wire size of any control message.
pub const CONTROL_BYTES: u64 = 100;

/// What a flow's opening packet tells the gateways and the server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowOpen {
    pub descriptor: FlowDescriptor,
    /// Bytes to transfer; `None` runs until stopped.
    pub total: Option<u64>,
    /// `(subflow, interface, path capacity)`; one entry unless multipath.
    pub subflows: Vec<(SubflowId, WapId, u64)>,
}

impl FlowOpen {
    pub fn multipath(&self) -> bool {
        self.subflows.len() > 1
    }
}

#[derive(Clone, PartialEq, Eq)]
pub enum PacketKind {
    Open(Box<FlowOpen>),
    /// The flow (or subflow) now uses the interface it arrived on.
    Rebind(Box<FlowDescriptor>),
    Data(Segment),
    Ack(u64),
    /// Terminal stops the flow.
    Close,
    /// Server's last packet on a route; the gateway closes its record.
    End,
}

/// One user-plane packet. `hops` grows by the links each delivery crossed.
#[derive(Clone, PartialEq, Eq)]
pub struct Packet {
    pub flow: FlowId,
    pub subflow: SubflowId,
    pub ue: NodeId,
    pub kind: PacketKind,
    pub route: Route,
    /// Set once an access point bounced it after the terminal left.
    pub forwarded: bool,
    pub hops: Vec<NodeId>,
}

impl Packet {
    pub fn new(flow: FlowId, subflow: SubflowId, ue: NodeId, kind: PacketKind, route: Route) -> Self {
        Self {
            flow,
            subflow,
            ue,
            kind,
            route,
            forwarded: false,
            hops: Vec::new(),
        }
    }

    pub fn payload_bytes(&self) -> u64 {
        match &self.kind {
            PacketKind::Data(s) => u64::from(s.len),
            _ => 0,
        }
    }

    pub fn is_downlink(&self) -> bool {
        matches!(self.kind, PacketKind::Data(_) | PacketKind::End)
    }

    pub fn size_bits(&self) -> u64 {
        (self.payload_bytes() + HEADER_BYTES) * 8
    }
}

impl fmt::Debug for Packet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "pkt {}.{} {} ", self.flow, self.subflow.0, self.ue)?;
        match &self.kind {
            PacketKind::Open(o) => write!(f, "open {}", o.descriptor.class)?,
            PacketKind::Rebind(_) => f.write_str("rebind")?,
            PacketKind::Data(s) => write!(f, "data {}+{}", s.seq, s.len)?,
            PacketKind::Ack(seq) => write!(f, "ack {seq}")?,
            PacketKind::Close => f.write_str("close")?,
            PacketKind::End => f.write_str("end")?,
        }
        write!(f, " {}", self.route)?;
        if self.forwarded {
            f.write_str(" fwd")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttachAccept {
    pub wap: WapId,
    pub access: AccessType,
    pub ip: Ipv4Addr,
    pub secure: bool,
    pub capacity_bps: u64,
    pub lgw: Option<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BearerChange {
    /// A further interface joins the session.
    Add(WapId),
    /// Downlink moves from one access point to another.
    Move { from: WapId, to: WapId },
}

/// Self-addressed timers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tick {
    Beacon,
    Report,
    /// The access point finished sending this packet over the air.
    TxDone(Box<Packet>),
    Flow(FlowId),
    Orchestrate,
    Charging,
    SouthboundTimeout(u64),
    /// End of an attach attempt that never got an answer.
    AnqpDeadline,
}

#[derive(Clone, PartialEq)]
pub enum Msg {
    /// Scenario directive number `n`, delivered to the world.
    Directive(usize),
    Tick(Tick),

    Beacon(Beacon),
    AnqpRequest(AnqpQuery),
    AnqpAnswer(Result<AnqpResponse, DiscoveryError>),

    AttachRequest { imsi: Imsi, method: EapMethod, quality: f64 },
    InitialUe { ue: NodeId, wap: WapId, access: AccessType, imsi: Imsi, method: EapMethod },
    AuthInfoRequest { ue: NodeId, imsi: Imsi },
    AuthInfoAnswer { ue: NodeId, vector: Result<Box<AuthVector>, EpcError> },
    /// EAP towards the terminal, relayed by its access point.
    DownNas { ue: NodeId, eap: EapMessage },
    /// EAP from the terminal; `ue` is filled in by the access point.
    UpNas { ue: NodeId, eap: EapMessage },
    CreateSession { ue: NodeId, imsi: Imsi, wap: WapId, mme: NodeId },
    CreateSessionResponse { ue: NodeId, result: Result<(Ipv4Addr, NodeId), EpcError> },
    PgwCreate { ue: NodeId, imsi: Imsi },
    PgwCreateResponse { ue: NodeId, result: Result<Ipv4Addr, EpcError> },
    ModifyBearer { ue: NodeId, change: BearerChange },
    ModifyBearerResponse { ue: NodeId, change: BearerChange },
    ContextSetup { ue: NodeId, sgw: NodeId, accept: AttachAccept },
    AttachAccept(AttachAccept),
    AttachReject { ue: NodeId, wap: WapId, reason: EpcError },
    BearerActivated { ue: NodeId, flow: FlowId, class: ServiceClass },

    PolicyRequest(Box<FlowDescriptor>),
    PolicyAnswer { descriptor: Box<FlowDescriptor>, rule: PolicyRule },

    HandoverDirective { target: WapId },
    MeasurementReport { target: WapId },
    HandoverRequired { ue: NodeId, source: WapId, target: WapId, demand_bps: u64 },
    HandoverRequest { ue: NodeId, source: WapId, demand_bps: u64, sgw: NodeId },
    HandoverRequestAck { ue: NodeId, target: WapId },
    HandoverFailure { ue: NodeId, target: WapId },
    HandoverCommand { ue: NodeId, target: WapId },
    HandoverPreparationFailure { ue: NodeId, target: WapId, reason: String },
    HandoverConfirm { source: WapId, quality: f64 },
    HandoverNotify { ue: NodeId, source: WapId, target: WapId },

    WapReport(Box<WapReport>),
    VnfReport(VnfReport),
    PushPolicy { corr: u64, policy: SodaPolicy },
    ConfigureCores { corr: u64, active: BTreeSet<u32> },
    SouthboundAck { corr: u64, result: Result<(), SouthboundError> },

    Data(Box<Packet>),
}

impl Msg {
    pub fn size_bits(&self) -> u64 {
        match self {
            Msg::Data(p) => p.size_bits(),
            _ => CONTROL_BYTES * 8,
        }
    }

    pub fn data(p: Packet) -> Self {
        Msg::Data(Box::new(p))
    }
}

// Compact and free of credentials: every delivered message becomes a trace
// line.
impl fmt::Debug for Msg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Msg::Directive(n) => write!(f, "Directive({n})"),
            Msg::Tick(Tick::TxDone(p)) => write!(f, "TxDone({p:?})"),
            Msg::Tick(t) => write!(f, "{t:?}"),
            Msg::Beacon(b) => write!(f, "Beacon({} iw={})", b.wap, b.interworking),
            Msg::AnqpRequest(q) => write!(f, "AnqpRequest({:?})", q.elements),
            Msg::AnqpAnswer(Ok(r)) => write!(f, "AnqpAnswer({:?})", r.tags()),
            Msg::AnqpAnswer(Err(e)) => write!(f, "AnqpAnswer({e:?})"),
            Msg::AttachRequest { imsi, method, .. } => write!(f, "AttachRequest({imsi} {method})"),
            Msg::InitialUe { ue, wap, method, .. } => write!(f, "InitialUe({ue} {wap} {method})"),
            Msg::AuthInfoRequest { ue, imsi } => write!(f, "AuthInfoRequest({ue} {imsi})"),
            Msg::AuthInfoAnswer { ue, vector: Ok(v) } => {
                write!(f, "AuthInfoAnswer({ue} nonce={})", v.nonce)
            }
            Msg::AuthInfoAnswer { ue, vector: Err(e) } => write!(f, "AuthInfoAnswer({ue} {e:?})"),
            Msg::DownNas { ue, eap } => write!(f, "DownNas({ue} {eap:?})"),
            Msg::UpNas { ue, eap } => write!(f, "UpNas({ue} {eap:?})"),
            Msg::CreateSession { ue, wap, .. } => write!(f, "CreateSession({ue} {wap})"),
            Msg::CreateSessionResponse { ue, result } => {
                write!(f, "CreateSessionResponse({ue} {result:?})")
            }
            Msg::PgwCreate { ue, .. } => write!(f, "PgwCreate({ue})"),
            Msg::PgwCreateResponse { ue, result } => write!(f, "PgwCreateResponse({ue} {result:?})"),
            Msg::ModifyBearer { ue, change } => write!(f, "ModifyBearer({ue} {change:?})"),
            Msg::ModifyBearerResponse { ue, change } => {
                write!(f, "ModifyBearerResponse({ue} {change:?})")
            }
            Msg::ContextSetup { ue, sgw, accept } => {
                write!(f, "ContextSetup({ue} sgw={sgw} ip={})", accept.ip)
            }
            Msg::AttachAccept(a) => write!(f, "AttachAccept({} ip={})", a.wap, a.ip),
            Msg::AttachReject { ue, wap, reason } => write!(f, "AttachReject({ue} {wap} {reason:?})"),
            Msg::BearerActivated { ue, flow, class } => {
                write!(f, "BearerActivated({ue} {flow} {class})")
            }
            Msg::PolicyRequest(d) => write!(f, "PolicyRequest({} {})", d.id, d.class),
            Msg::PolicyAnswer { descriptor, rule } => write!(
                f,
                "PolicyAnswer({} {} {} {:?})",
                descriptor.id, rule.qos_class, rule.max_bitrate_bps, rule.action
            ),
            Msg::HandoverDirective { target } => write!(f, "HandoverDirective({target})"),
            Msg::MeasurementReport { target } => write!(f, "MeasurementReport({target})"),
            Msg::HandoverRequired {
                ue,
                source,
                target,
                demand_bps,
            } => write!(f, "HandoverRequired({ue} {source}->{target} {demand_bps})"),
            Msg::HandoverRequest { ue, source, demand_bps, .. } => {
                write!(f, "HandoverRequest({ue} from {source} {demand_bps})")
            }
            Msg::HandoverRequestAck { ue, target } => write!(f, "HandoverRequestAck({ue} {target})"),
            Msg::HandoverFailure { ue, target } => write!(f, "HandoverFailure({ue} {target})"),
            Msg::HandoverCommand { ue, target } => write!(f, "HandoverCommand({ue} {target})"),
            Msg::HandoverPreparationFailure { ue, target, reason } => {
                write!(f, "HandoverPreparationFailure({ue} {target} {reason})")
            }
            Msg::HandoverConfirm { source, .. } => write!(f, "HandoverConfirm(from {source})"),
            Msg::HandoverNotify { ue, source, target } => {
                write!(f, "HandoverNotify({ue} {source}->{target})")
            }
            Msg::WapReport(r) => write!(
                f,
                "WapReport({} load={} cap={} v{})",
                r.wap, r.load_bps, r.capacity_bps, r.policy_version
            ),
            Msg::VnfReport(r) => write!(f, "VnfReport({} {} {:.4})", r.kind, r.instance, r.utilization),
            Msg::PushPolicy { corr, policy } => write!(
                f,
                "PushPolicy(#{corr} v{} {})",
                policy.version, policy.scheduler
            ),
            Msg::ConfigureCores { corr, active } => write!(f, "ConfigureCores(#{corr} {active:?})"),
            Msg::SouthboundAck { corr, result } => write!(f, "SouthboundAck(#{corr} {result:?})"),
            Msg::Data(p) => write!(f, "{p:?}"),
        }
    }
}
