use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::net::Ipv4Addr;

use crate::discovery::{
    select_network, sim_peer_response, usable_methods, AccessType, AnqpElement, AnqpQuery,
    AnqpResponse, Beacon, EapMessage, EapMethod, NetworkCandidate, SelectionPolicy, TtlsPeer,
};
use crate::engine::NodeId;
use crate::epc::{Destination, FlowDescriptor, ServiceClass, SubscriberProfile};
use crate::ids::{FlowId, WapId};
use crate::mobility::{
    ifom_bind_flow, sipto_breakout, FlowBinding, IfomPolicy, MobilityError, Reassembly, Route,
    SubflowId,
};
use crate::proto::{FlowOpen, Msg, Packet, PacketKind, Tick};

use super::{Audit, Ctx, Outbox};

/// How long an automatic attach waits for ANQP answers.
pub const ANQP_WAIT_US: u64 = 50_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UeInterface {
    pub access: AccessType,
    pub secure: bool,
    pub capacity_bps: u64,
    pub lgw: Option<NodeId>,
}

/// Terminal side of one flow.
#[derive(Debug, Clone)]
pub struct UeFlow {
    pub descriptor: FlowDescriptor,
    pub interface: WapId,
    pub route: Route,
    /// `(subflow, interface)`; one entry unless multipath.
    pub subflows: Vec<(SubflowId, WapId)>,
    pub total: Option<u64>,
    pub reassembly: Reassembly,
    /// Payload bytes received per subflow, duplicates included.
    pub received: BTreeMap<SubflowId, u64>,
    /// Distinct hop lists data arrived over, by route.
    pub paths: BTreeMap<Route, BTreeSet<Vec<NodeId>>>,
    pub ended: bool,
}

impl UeFlow {
    pub fn multipath(&self) -> bool {
        self.subflows.len() > 1
    }
}

/// What a start-flow directive asks for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRequest {
    pub id: FlowId,
    pub name: String,
    pub class: ServiceClass,
    pub rate_bps: u64,
    pub destination: Destination,
    pub total: Option<u64>,
    /// Interfaces for a multipath connection; empty for a single path.
    pub multipath: Vec<WapId>,
}

#[derive(Debug, Clone)]
struct Attaching {
    wap: WapId,
    ttls: Option<TtlsPeer>,
}

#[derive(Debug, Clone, Default)]
struct Discovery {
    asked: BTreeSet<WapId>,
    answers: BTreeMap<WapId, AnqpResponse>,
}

/// A terminal with one radio per access technology.
#[derive(Debug, Clone)]
pub struct UeNode {
    pub profile: SubscriberProfile,
    pub ifom: IfomPolicy,
    pub selection: SelectionPolicy,
    beacons: BTreeMap<WapId, Beacon>,
    discovery: Option<Discovery>,
    attaching: Option<Attaching>,
    queued: VecDeque<Option<WapId>>,
    pub interfaces: BTreeMap<WapId, UeInterface>,
    pub ip: Option<Ipv4Addr>,
    pub flows: BTreeMap<FlowId, UeFlow>,
    handovers: u32,
}

impl UeNode {
    pub fn new(profile: SubscriberProfile) -> Self {
        Self {
            profile,
            ifom: IfomPolicy::default(),
            selection: SelectionPolicy::default(),
            beacons: BTreeMap::new(),
            discovery: None,
            attaching: None,
            queued: VecDeque::new(),
            interfaces: BTreeMap::new(),
            ip: None,
            flows: BTreeMap::new(),
            handovers: 0,
        }
    }

    /// Handovers this terminal has carried out.
    /// Access point of the attach in progress.
    pub fn attaching(&self) -> Option<WapId> {
        self.attaching.as_ref().map(|a| a.wap)
    }

    pub fn handovers(&self) -> u32 {
        self.handovers
    }

    fn method(&self) -> EapMethod {
        if usable_methods(&self.profile).contains(&EapMethod::Sim) {
            EapMethod::Sim
        } else {
            EapMethod::Ttls
        }
    }

    /// Attaches through `via`, or picks a network from beacons and ANQP
    /// when `via` is `None`. Attempts run one at a time.
    pub fn attach(&mut self, cx: &Ctx, via: Option<WapId>, out: &mut Outbox) {
        if self.attaching.is_some() || self.discovery.is_some() {
            self.queued.push_back(via);
            return;
        }
        match via {
            Some(w) => self.request(cx, w, out),
            None => self.discover(cx, out),
        }
    }

    fn request(&mut self, cx: &Ctx, wap: WapId, out: &mut Outbox) {
        let method = self.method();
        let ttls = (method == EapMethod::Ttls)
            .then(|| TtlsPeer::new(cx.config.trust.clone(), self.profile.password_credential.clone()));
        self.attaching = Some(Attaching { wap, ttls });
        let quality = cx.dir.waps.get(&wap).map_or(1.0, |w| w.quality);
        out.send(
            wap,
            Msg::AttachRequest {
                imsi: self.profile.imsi.clone(),
                method,
                quality,
            },
        );
    }

    fn discover(&mut self, cx: &Ctx, out: &mut Outbox) {
        let query = AnqpQuery {
            elements: AnqpElement::ALL.into_iter().collect(),
        };
        let mut d = Discovery::default();
        for b in self.beacons.values().filter(|b| b.interworking) {
            d.asked.insert(b.wap);
            out.send(b.wap, Msg::AnqpRequest(query.clone()));
        }
        self.discovery = Some(d);
        out.timer(cx.now.after(ANQP_WAIT_US), Tick::AnqpDeadline);
    }

    fn choose_network(&mut self, cx: &Ctx, out: &mut Outbox) {
        let Some(d) = self.discovery.take() else { return };
        let candidates: Vec<NetworkCandidate> = d
            .answers
            .iter()
            .filter_map(|(w, anqp)| {
                let b = self.beacons.get(w)?;
                let quality = cx.dir.waps.get(w).map_or(1.0, |i| i.quality);
                Some(NetworkCandidate::new(b, anqp.clone(), &self.profile, quality))
            })
            .collect();
        let chosen = select_network(&candidates, &self.profile, &self.selection);
        out.audit(Audit::NetworkSelected {
            ue: cx.me,
            wap: chosen,
        });
        match chosen {
            Some(w) => self.request(cx, w, out),
            None => self.next_attach(cx, out),
        }
    }

    fn next_attach(&mut self, cx: &Ctx, out: &mut Outbox) {
        if let Some(via) = self.queued.pop_front() {
            self.attach(cx, via, out);
        }
    }

    pub fn start_flow(&mut self, cx: &Ctx, req: FlowRequest, out: &mut Outbox) {
        let reject = |out: &mut Outbox, e: MobilityError| {
            out.audit(Audit::FlowRejected {
                flow: req.id,
                reason: e.to_string(),
            })
        };
        if self.flows.contains_key(&req.id) {
            return out.audit(Audit::Error(format!("flow {} already exists", req.name)));
        }
        if self.ip.is_none() || self.interfaces.is_empty() {
            return reject(out, MobilityError::NotAttached);
        }
        let descriptor = FlowDescriptor {
            id: req.id,
            name: req.name.clone(),
            imsi: self.profile.imsi.clone(),
            ue_ip: self.ip,
            destination: req.destination,
            class: req.class.clone(),
            requested_bps: req.rate_bps,
        };
        let (interface, route, subflows) = if req.multipath.is_empty() {
            let slots = self
                .interfaces
                .iter()
                .map(|(w, i)| (*w, i.access.slot()))
                .collect();
            let w = self.ifom.choose(&req.class, &slots).expect("attached somewhere");
            let lgw = self.interfaces[&w].lgw;
            let route = sipto_breakout(&req.class, req.destination, &cx.config.offload, lgw);
            (w, route, vec![(SubflowId(0), w)])
        } else {
            if let Some(w) = req.multipath.iter().find(|w| !self.interfaces.contains_key(w)) {
                return reject(out, MobilityError::InterfaceNotAttached(*w));
            }
            let subflows: Vec<_> = req
                .multipath
                .iter()
                .enumerate()
                .map(|(i, w)| (SubflowId(i as u32), *w))
                .collect();
            // Multipath connections stay on the core so one gateway sees
            // every subflow.
            (req.multipath[0], Route::Core, subflows)
        };
        let open = FlowOpen {
            descriptor: descriptor.clone(),
            total: req.total,
            subflows: subflows
                .iter()
                .map(|&(sf, w)| (sf, w, self.interfaces[&w].capacity_bps))
                .collect(),
        };
        let pkt = Packet::new(
            req.id,
            SubflowId(0),
            cx.me,
            PacketKind::Open(Box::new(open)),
            route,
        );
        out.send(interface, Msg::data(pkt));
        out.audit(Audit::FlowOpened {
            flow: req.id,
            ue: cx.me,
            interface,
            route,
        });
        self.flows.insert(
            req.id,
            UeFlow {
                descriptor,
                interface,
                route,
                subflows,
                total: req.total,
                reassembly: Reassembly::recording(),
                received: BTreeMap::new(),
                paths: BTreeMap::new(),
                ended: false,
            },
        );
    }

    pub fn bind_flow(&mut self, cx: &Ctx, flow: FlowId, wap: WapId, out: &mut Outbox) {
        let attachments: BTreeMap<WapId, bool> =
            self.interfaces.iter().map(|(w, i)| (*w, i.secure)).collect();
        let Some(f) = self.flows.get_mut(&flow) else {
            return out.audit(Audit::Error(format!("no flow {flow} on {}", cx.me)));
        };
        if f.multipath() {
            return out.audit(Audit::FlowRejected {
                flow,
                reason: "multipath flows use every interface already".into(),
            });
        }
        let current = FlowBinding {
            flow_id: flow,
            ue: cx.me,
            interface: f.interface,
            route: f.route,
            cursor: f.reassembly.cursor(),
        };
        let binding = match ifom_bind_flow(&attachments, Some(&current), flow, cx.me, wap) {
            Ok(b) => b,
            Err(e) => {
                return out.audit(Audit::FlowRejected {
                    flow,
                    reason: e.to_string(),
                })
            }
        };
        let lgw = self.interfaces[&wap].lgw;
        let route = match binding.route {
            Route::Core => Route::Core,
            Route::Local { .. } => sipto_breakout(
                &f.descriptor.class,
                f.descriptor.destination,
                &cx.config.offload,
                lgw,
            ),
        };
        f.interface = wap;
        f.route = route;
        f.subflows = vec![(SubflowId(0), wap)];
        rebind(cx.me, f, out);
        out.audit(Audit::FlowRebound {
            flow,
            interface: wap,
            route,
        });
    }

    pub fn stop_flow(&mut self, cx: &Ctx, flow: FlowId, out: &mut Outbox) {
        let Some(f) = self.flows.get(&flow) else {
            return out.audit(Audit::Error(format!("no flow {flow} on {}", cx.me)));
        };
        let (sf, w) = f.subflows[0];
        let pkt = Packet::new(flow, sf, cx.me, PacketKind::Close, f.route);
        out.send(w, Msg::data(pkt));
    }

    /// Asks the serving access point of the same radio to move this
    /// terminal to `target`.
    pub fn handover(&mut self, cx: &Ctx, target: WapId, out: &mut Outbox) {
        let source = cx.dir.waps.get(&target).and_then(|t| {
            self.interfaces
                .iter()
                .find(|(_, i)| i.access.slot() == t.access.slot())
                .map(|(w, _)| *w)
        });
        match source {
            Some(s) => out.send(s, Msg::MeasurementReport { target }),
            None => out.audit(Audit::HandoverRejected {
                ue: cx.me,
                target,
                reason: MobilityError::NotAttached.to_string(),
            }),
        }
    }

    pub fn handle(&mut self, cx: &Ctx, src: NodeId, msg: Msg, out: &mut Outbox) {
        match msg {
            Msg::Beacon(b) => {
                self.beacons.insert(b.wap, b);
            }
            Msg::AnqpAnswer(answer) => {
                let wap = WapId::from(src);
                let Some(d) = self.discovery.as_mut().filter(|d| d.asked.contains(&wap)) else {
                    return;
                };
                out.audit(Audit::AnqpExchange {
                    ue: cx.me,
                    wap,
                    requested: AnqpElement::ALL.into_iter().collect(),
                    answered: answer.as_ref().map(AnqpResponse::tags).map_err(Clone::clone),
                });
                d.asked.remove(&wap);
                if let Ok(a) = answer {
                    d.answers.insert(wap, a);
                }
                if d.asked.is_empty() {
                    self.choose_network(cx, out);
                }
            }
            Msg::Tick(Tick::AnqpDeadline) => self.choose_network(cx, out),
            Msg::DownNas { eap, .. } => self.nas(cx, src, eap, out),
            Msg::AttachAccept(a) => {
                self.attaching = None;
                self.interfaces.insert(
                    a.wap,
                    UeInterface {
                        access: a.access,
                        secure: a.secure,
                        capacity_bps: a.capacity_bps,
                        lgw: a.lgw,
                    },
                );
                self.ip = Some(a.ip);
                self.next_attach(cx, out);
            }
            Msg::AttachReject { .. } => {
                self.attaching = None;
                self.next_attach(cx, out);
            }
            Msg::HandoverDirective { target } => self.handover(cx, target, out),
            Msg::HandoverPreparationFailure { .. } => {}
            Msg::HandoverCommand { target, .. } => self.handover_command(cx, src, target, out),
            Msg::Data(pkt) => self.data(cx, src, *pkt, out),
            other => out.audit(Audit::Error(format!("{}: unexpected {other:?}", cx.me))),
        }
    }

    fn nas(&mut self, cx: &Ctx, wap: NodeId, eap: EapMessage, out: &mut Outbox) {
        let Some(a) = self.attaching.as_mut() else { return };
        let reply = match (&eap, a.ttls.as_mut()) {
            (EapMessage::SimChallenge { nonce }, None) => self.profile.shared_key.as_ref().map(|key| EapMessage::SimResponse {
                response: sim_peer_response(key, nonce),
            }),
            (EapMessage::Success | EapMessage::Failure(_), None) => None,
            (_, Some(peer)) => match peer.on_message(&eap) {
                Ok(r) => r,
                // The server already knows when it sent the failure.
                Err(_) if matches!(eap, EapMessage::Failure(_)) => None,
                Err(e) => Some(EapMessage::PeerAbort(e)),
            },
            (other, None) => {
                out.audit(Audit::Error(format!("{}: unexpected {other:?}", cx.me)));
                None
            }
        };
        if let Some(eap) = reply {
            out.send(wap, Msg::UpNas { ue: cx.me, eap });
        }
    }

    fn handover_command(&mut self, cx: &Ctx, src: NodeId, target: WapId, out: &mut Outbox) {
        let source = WapId::from(src);
        let Some(old) = self.interfaces.remove(&source) else { return };
        let info = cx.dir.waps.get(&target);
        self.interfaces.insert(
            target,
            UeInterface {
                access: info.map_or(old.access, |i| i.access),
                secure: old.secure,
                capacity_bps: info.map_or(old.capacity_bps, |i| i.capacity_bps),
                lgw: info.and_then(|i| i.lgw),
            },
        );
        self.handovers += 1;
        let quality = info.map_or(1.0, |i| i.quality);
        out.send(target, Msg::HandoverConfirm { source, quality });
        let lgw = info.and_then(|i| i.lgw);
        for f in self.flows.values_mut() {
            for sf in &mut f.subflows {
                if sf.1 == source {
                    sf.1 = target;
                }
            }
            if f.interface != source {
                continue;
            }
            f.interface = target;
            // A local breakout cannot follow the terminal; pick again at
            // the new access point.
            if let Route::Local { .. } = f.route {
                f.route = sipto_breakout(
                    &f.descriptor.class,
                    f.descriptor.destination,
                    &cx.config.offload,
                    lgw,
                );
                rebind(cx.me, f, out);
            }
        }
    }

    fn data(&mut self, cx: &Ctx, src: NodeId, pkt: Packet, out: &mut Outbox) {
        let Some(f) = self.flows.get_mut(&pkt.flow) else { return };
        match pkt.kind {
            PacketKind::Data(seg) => {
                f.reassembly.receive(seg.seq, seg.len);
                *f.received.entry(pkt.subflow).or_default() += u64::from(seg.len);
                let hops = f.paths.entry(pkt.route).or_default();
                if !hops.contains(&pkt.hops) {
                    hops.insert(pkt.hops.clone());
                }
                if f.multipath() {
                    let ack = Packet::new(pkt.flow, pkt.subflow, cx.me, PacketKind::Ack(seg.seq), f.route);
                    out.send(src, Msg::data(ack));
                }
            }
            PacketKind::End if pkt.route == f.route => f.ended = true,
            _ => {}
        }
    }
}

/// Tells the network the flow now uses `f.interface` and `f.route`.
fn rebind(me: NodeId, f: &UeFlow, out: &mut Outbox) {
    let pkt = Packet::new(
        f.descriptor.id,
        SubflowId(0),
        me,
        PacketKind::Rebind(Box::new(f.descriptor.clone())),
        f.route,
    );
    out.send(f.interface, Msg::data(pkt));
}
