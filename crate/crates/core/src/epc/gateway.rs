use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use super::{
    Breakout, ChargingRecord, Direction, FlowDescriptor, Imsi, IpPool, PacketInfo,
    Pcef, PolicyRule,
};
use crate::controller::VnfKind;
use crate::engine::{NodeId, SimTime};
use crate::ids::{FlowId, WapId};
use crate::mobility::SubflowId;
use crate::proto::{BearerChange, Msg, Packet, PacketKind};
use crate::world::{Address, Audit, Ctx, Outbox};

/// Enforcement plus the bookkeeping around it that both the PDN gateway
/// and the local gateways need: descriptors learned from opening packets,
/// packets parked while the policy function decides, and flows whose
/// record is already closed.
#[derive(Debug, Clone)]
pub struct Charging {
    pub pcef: Pcef,
    descriptors: BTreeMap<FlowId, FlowDescriptor>,
    parked: BTreeMap<FlowId, Vec<(Packet, Direction)>>,
    closed: BTreeSet<FlowId>,
}

/// What to do with a packet after enforcement.
#[derive(Debug)]
pub enum Verdict {
    Forward(Packet),
    /// Parked until the policy answer; nothing to send yet.
    Held,
    Dropped,
}

impl Charging {
    pub fn new(breakout: Breakout, window_us: u64) -> Self {
        Self {
            pcef: Pcef::new(breakout, window_us),
            descriptors: BTreeMap::new(),
            parked: BTreeMap::new(),
            closed: BTreeSet::new(),
        }
    }

    pub fn descriptor(&self, flow: FlowId) -> Option<&FlowDescriptor> {
        self.descriptors.get(&flow)
    }

    /// Runs `pkt` through enforcement; asks the policy function on the
    /// first packet of an unknown flow.
    pub fn admit(&mut self, now: SimTime, pkt: Packet, dir: Direction, out: &mut Outbox) -> Verdict {
        match &pkt.kind {
            PacketKind::Open(o) => {
                self.descriptors.insert(pkt.flow, o.descriptor.clone());
            }
            PacketKind::Rebind(d) => {
                self.descriptors.insert(pkt.flow, (**d).clone());
            }
            _ => {}
        }
        let bytes = pkt.payload_bytes();
        if self.closed.contains(&pkt.flow) || !self.descriptors.contains_key(&pkt.flow) {
            if bytes == 0 && !matches!(pkt.kind, PacketKind::Open(_) | PacketKind::Rebind(_)) {
                // Trailing control packet of a finished flow: nothing to charge.
                return Verdict::Forward(pkt);
            }
            if !self.descriptors.contains_key(&pkt.flow) {
                return Verdict::Dropped;
            }
            self.closed.remove(&pkt.flow);
        }
        let info = PacketInfo {
            flow: pkt.flow,
            direction: dir,
            bytes,
        };
        match self.pcef.enforce(now, info) {
            super::Enforcement::Forward => Verdict::Forward(pkt),
            super::Enforcement::Drop => Verdict::Dropped,
            super::Enforcement::NeedsAuthorization => {
                let flow = pkt.flow;
                self.parked.entry(flow).or_default().push((pkt, dir));
                if self.pcef.request_authorization(flow) {
                    let d = self.descriptors[&flow].clone();
                    out.send(Address::Service(VnfKind::Pcrf), Msg::PolicyRequest(Box::new(d)));
                }
                Verdict::Held
            }
        }
    }

    /// Installs the decision and re-runs the parked packets in order.
    pub fn install(
        &mut self,
        now: SimTime,
        descriptor: FlowDescriptor,
        rule: PolicyRule,
        out: &mut Outbox,
    ) -> Vec<(Packet, Direction)> {
        let flow = descriptor.id;
        self.pcef.install(descriptor, rule, now);
        let mut ready = Vec::new();
        for (pkt, dir) in self.parked.remove(&flow).unwrap_or_default() {
            if let Verdict::Forward(p) = self.admit(now, pkt, dir, out) {
                ready.push((p, dir));
            }
        }
        ready
    }

    /// Cuts the final record of `flow`.
    pub fn close(&mut self, flow: FlowId, now: SimTime, out: &mut Outbox) {
        if let Some(r) = self.pcef.close(flow, now) {
            out.cdr(r);
        }
        self.closed.insert(flow);
    }

    pub fn interim(&mut self, now: SimTime, out: &mut Outbox) {
        for r in self.pcef.interim(now) {
            out.cdr(r);
        }
    }

    pub fn close_all(&mut self, now: SimTime) -> Vec<ChargingRecord> {
        let records = self.pcef.close_all(now);
        self.closed.extend(self.descriptors.keys().copied());
        records
    }

    pub fn forwarded_by_imsi(&self) -> &BTreeMap<Imsi, u64> {
        self.pcef.forwarded_by_imsi()
    }
}

#[derive(Debug, Clone)]
struct Session {
    mme: NodeId,
    pgw: Option<NodeId>,
    waps: BTreeSet<WapId>,
    default_wap: WapId,
    bindings: BTreeMap<(FlowId, SubflowId), WapId>,
    /// Downlink bounced back by an access point the terminal is leaving,
    /// held until the bearer moves.
    buffer: Vec<Packet>,
    forwarded: u64,
}

/// Serving gateway: the mobility anchor. Keeps the per-flow downlink
/// binding and buffers what arrives mid-handover.
#[derive(Debug, Clone, Default)]
pub struct Sgw {
    sessions: BTreeMap<NodeId, Session>,
    /// Set when the PDN gateway runs in the same box.
    pub colocated_pgw: Option<NodeId>,
}

impl Sgw {
    /// Packets re-sent after an access point bounced them.
    pub fn forwarded(&self, ue: NodeId) -> u64 {
        self.sessions.get(&ue).map_or(0, |s| s.forwarded)
    }

    pub fn handle(&mut self, _cx: &Ctx, src: NodeId, msg: Msg, out: &mut Outbox) {
        match msg {
            Msg::CreateSession { ue, imsi, wap, mme } => {
                self.sessions.insert(
                    ue,
                    Session {
                        mme,
                        pgw: None,
                        waps: [wap].into(),
                        default_wap: wap,
                        bindings: BTreeMap::new(),
                        buffer: Vec::new(),
                        forwarded: 0,
                    },
                );
                let to = match self.colocated_pgw {
                    Some(p) => Address::Node(p),
                    None => Address::Service(VnfKind::Pgw),
                };
                out.send(to, Msg::PgwCreate { ue, imsi });
            }
            Msg::PgwCreateResponse { ue, result } => {
                let Some(s) = self.sessions.get_mut(&ue) else { return };
                let result = result.map(|ip| {
                    s.pgw = Some(src);
                    (ip, src)
                });
                let mme = s.mme;
                if result.is_err() {
                    self.sessions.remove(&ue);
                }
                out.send(mme, Msg::CreateSessionResponse { ue, result });
            }
            Msg::ModifyBearer { ue, change } => {
                let Some(s) = self.sessions.get_mut(&ue) else { return };
                match change {
                    BearerChange::Add(w) => {
                        s.waps.insert(w);
                    }
                    BearerChange::Move { from, to } => {
                        s.waps.remove(&from);
                        s.waps.insert(to);
                        if s.default_wap == from {
                            s.default_wap = to;
                        }
                        for w in s.bindings.values_mut() {
                            if *w == from {
                                *w = to;
                            }
                        }
                        for pkt in std::mem::take(&mut s.buffer) {
                            let w = s.downlink_wap(&pkt);
                            out.send(w, Msg::data(pkt));
                        }
                    }
                }
                out.send(src, Msg::ModifyBearerResponse { ue, change });
            }
            Msg::Data(pkt) => self.data(src, *pkt, out),
            other => out.audit(Audit::Error(format!("sgw: unexpected {other:?}"))),
        }
    }

    fn data(&mut self, src: NodeId, mut pkt: Packet, out: &mut Outbox) {
        let Some(s) = self.sessions.get_mut(&pkt.ue) else { return };
        if !pkt.is_downlink() {
            let from = WapId::from(src);
            match &pkt.kind {
                PacketKind::Open(o) => {
                    for &(sf, w, _) in &o.subflows {
                        s.bindings.insert((pkt.flow, sf), w);
                    }
                }
                PacketKind::Rebind(_) => {
                    s.bindings.insert((pkt.flow, pkt.subflow), from);
                }
                _ => {}
            }
            if let Some(pgw) = s.pgw {
                out.send(pgw, Msg::data(pkt));
            }
            return;
        }
        let w = s.downlink_wap(&pkt);
        if pkt.forwarded {
            s.forwarded += 1;
            if w == WapId::from(src) {
                s.buffer.push(pkt);
                return;
            }
            pkt.forwarded = false;
        }
        out.send(w, Msg::data(pkt));
    }
}

impl Session {
    fn downlink_wap(&self, pkt: &Packet) -> WapId {
        self.bindings
            .get(&(pkt.flow, pkt.subflow))
            .copied()
            .unwrap_or(self.default_wap)
    }
}

/// PDN gateway: address allocation, enforcement and Core charging.
#[derive(Debug, Clone)]
pub struct Pgw {
    pool: IpPool,
    pub charging: Charging,
    sessions: BTreeMap<NodeId, (Imsi, Ipv4Addr, NodeId)>,
    activated: BTreeSet<FlowId>,
}

impl Pgw {
    pub fn new(pool: IpPool, window_us: u64) -> Self {
        Self {
            pool,
            charging: Charging::new(Breakout::Core, window_us),
            sessions: BTreeMap::new(),
            activated: BTreeSet::new(),
        }
    }

    pub fn address(&self, ue: NodeId) -> Option<Ipv4Addr> {
        self.sessions.get(&ue).map(|s| s.1)
    }

    pub fn handle(&mut self, cx: &Ctx, src: NodeId, msg: Msg, out: &mut Outbox) {
        match msg {
            Msg::PgwCreate { ue, imsi } => {
                let result = match self.sessions.get(&ue) {
                    Some(s) => Ok(s.1),
                    None => self.pool.allocate(),
                };
                if let Ok(ip) = result {
                    self.sessions.insert(ue, (imsi, ip, src));
                }
                out.send(src, Msg::PgwCreateResponse { ue, result });
            }
            Msg::PolicyAnswer { descriptor, rule } => {
                let class = rule.qos_class.clone();
                let flow = descriptor.id;
                let ready = self.charging.install(cx.now, *descriptor, rule, out);
                if self.activated.insert(flow) {
                    if let Some(ue) = ready.first().map(|(p, _)| p.ue) {
                        out.send(Address::Mme(ue), Msg::BearerActivated { ue, flow, class });
                    }
                }
                for (pkt, dir) in ready {
                    self.forward(cx, pkt, dir, out);
                }
            }
            Msg::Tick(crate::proto::Tick::Charging) => self.charging.interim(cx.now, out),
            Msg::Data(pkt) => {
                let dir = if pkt.is_downlink() {
                    Direction::Down
                } else {
                    Direction::Up
                };
                if let Verdict::Forward(p) = self.charging.admit(cx.now, *pkt, dir, out) {
                    self.forward(cx, p, dir, out);
                }
            }
            other => out.audit(Audit::Error(format!("pgw: unexpected {other:?}"))),
        }
    }

    fn forward(&mut self, cx: &Ctx, pkt: Packet, dir: Direction, out: &mut Outbox) {
        if matches!(pkt.kind, PacketKind::End) {
            self.charging.close(pkt.flow, cx.now, out);
        }
        match dir {
            Direction::Up => out.send(crate::world::INTERNET, Msg::data(pkt)),
            Direction::Down => {
                if let Some(&(_, _, sgw)) = self.sessions.get(&pkt.ue) {
                    out.send(sgw, Msg::data(pkt));
                }
            }
        }
    }
}
