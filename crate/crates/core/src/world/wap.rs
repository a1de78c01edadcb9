use std::collections::{BTreeMap, VecDeque};

use crate::controller::{configure_comm_cores, Decision, PolicySlot, WapReport};
use crate::discovery::{anqp_query, emit_beacon, Wap};
use crate::engine::NodeId;
use crate::ids::WapId;
use crate::mobility::{admit_handover, Route};
use crate::proto::{Msg, Packet, Tick};

use super::{Address, Audit, Ctx, Outbox, CONTROLLER};

#[derive(Debug, Clone, Copy)]
struct Station {
    quality: f64,
    sgw: NodeId,
}

#[derive(Debug, Clone, Copy)]
struct Departed {
    target: WapId,
    sgw: NodeId,
}

/// An access point: radio relay for the control plane, a per-terminal
/// downlink queue drained by one transmitter, and the southbound agent.
#[derive(Debug, Clone)]
pub struct WapNode {
    pub wap: Wap,
    pub lgw: Option<NodeId>,
    /// One-way latency of the radio link to each terminal.
    pub radio_latency_us: u64,
    policy: PolicySlot,
    stations: BTreeMap<NodeId, Station>,
    attaching: BTreeMap<NodeId, f64>,
    incoming: BTreeMap<NodeId, NodeId>,
    departed: BTreeMap<NodeId, Departed>,
    queues: BTreeMap<NodeId, VecDeque<Packet>>,
    transmitting: bool,
    window_bits: u64,
    window_ue_bits: BTreeMap<NodeId, u64>,
    demands: BTreeMap<NodeId, u64>,
    peak_load_bps: u64,
    sent_bits: u64,
    forwarded: u64,
    /// Transmissions per policy version.
    decisions: BTreeMap<u64, u64>,
    mixed_decisions: u64,
}

impl WapNode {
    pub fn new(wap: Wap, lgw: Option<NodeId>) -> Self {
        Self {
            radio_latency_us: wap.access_type.default_latency_us(),
            wap,
            lgw,
            policy: PolicySlot::default(),
            stations: BTreeMap::new(),
            attaching: BTreeMap::new(),
            incoming: BTreeMap::new(),
            departed: BTreeMap::new(),
            queues: BTreeMap::new(),
            transmitting: false,
            window_bits: 0,
            window_ue_bits: BTreeMap::new(),
            demands: BTreeMap::new(),
            peak_load_bps: 0,
            sent_bits: 0,
            forwarded: 0,
            decisions: BTreeMap::new(),
            mixed_decisions: 0,
        }
    }

    pub fn id(&self) -> WapId {
        self.wap.id
    }

    pub fn attached(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.stations.keys().copied()
    }

    pub fn peak_load_bps(&self) -> u64 {
        self.peak_load_bps
    }

    pub fn sent_bits(&self) -> u64 {
        self.sent_bits
    }

    /// Downlink packets sent onwards after their terminal left.
    pub fn forwarded(&self) -> u64 {
        self.forwarded
    }

    pub fn policy_version(&self) -> u64 {
        self.policy.active().version
    }

    pub fn decisions(&self) -> &BTreeMap<u64, u64> {
        &self.decisions
    }

    /// Decisions taken by a scheduler of another version than the active
    /// policy. Stays 0.
    pub fn mixed_decisions(&self) -> u64 {
        self.mixed_decisions
    }

    pub fn handle(&mut self, cx: &Ctx, src: NodeId, msg: Msg, out: &mut Outbox) {
        let me = self.wap.id;
        match msg {
            Msg::Tick(Tick::Beacon) => {
                out.timer(cx.now.after(cx.config.beacon_interval_us), Tick::Beacon);
                if let Some(b) = emit_beacon(&self.wap, cx.now) {
                    for &ue in &cx.dir.ues {
                        out.send(ue, Msg::Beacon(b.clone()));
                    }
                }
            }
            Msg::Tick(Tick::Report) => self.report(cx, out),
            Msg::Tick(Tick::TxDone(pkt)) => {
                self.transmitting = false;
                let bits = pkt.size_bits();
                self.window_bits += bits;
                self.sent_bits += bits;
                *self.window_ue_bits.entry(pkt.ue).or_default() += bits;
                if self.departed.contains_key(&pkt.ue) {
                    self.bounce(*pkt, out);
                } else {
                    out.send(pkt.ue, Msg::Data(pkt));
                }
                self.kick(cx, out);
            }
            Msg::AnqpRequest(q) => out.send(src, Msg::AnqpAnswer(anqp_query(&self.wap, &q))),
            Msg::AttachRequest {
                imsi,
                method,
                quality,
            } => {
                let cap = self.wap.effective_capacity_bps();
                if !self.wap.is_on_air() || self.wap.current_load_bps >= cap {
                    let reason = crate::epc::EpcError::WapAtCapacity;
                    out.audit(Audit::AttachRejected {
                        ue: src,
                        wap: me,
                        reason: reason.to_string(),
                    });
                    out.send(src, Msg::AttachReject { ue: src, wap: me, reason });
                    return;
                }
                self.attaching.insert(src, quality);
                out.send(
                    Address::Mme(src),
                    Msg::InitialUe {
                        ue: src,
                        wap: me,
                        access: self.wap.access_type,
                        imsi,
                        method,
                    },
                );
            }
            Msg::UpNas { eap, .. } => out.send(Address::Mme(src), Msg::UpNas { ue: src, eap }),
            Msg::DownNas { ue, eap } => out.send(ue, Msg::DownNas { ue, eap }),
            Msg::ContextSetup { ue, sgw, mut accept } => {
                let quality = self.attaching.remove(&ue).unwrap_or(self.wap.link_quality);
                self.stations.insert(ue, Station { quality, sgw });
                self.departed.remove(&ue);
                accept.capacity_bps = self.wap.effective_capacity_bps();
                accept.lgw = self.lgw;
                out.send(ue, Msg::AttachAccept(accept));
            }
            Msg::AttachReject { ue, wap, reason } => {
                self.attaching.remove(&ue);
                out.send(ue, Msg::AttachReject { ue, wap, reason });
            }
            Msg::MeasurementReport { target } => {
                let demand_bps = self.demands.get(&src).copied().unwrap_or(0);
                out.send(
                    Address::Mme(src),
                    Msg::HandoverRequired {
                        ue: src,
                        source: me,
                        target,
                        demand_bps,
                    },
                );
            }
            Msg::HandoverRequest {
                ue,
                demand_bps,
                sgw,
                ..
            } => {
                let cap = self.wap.effective_capacity_bps();
                let ok = self.wap.is_on_air()
                    && admit_handover(self.wap.current_load_bps, demand_bps, cap).is_ok();
                if ok {
                    self.incoming.insert(ue, sgw);
                    out.send(Address::Mme(ue), Msg::HandoverRequestAck { ue, target: me });
                } else {
                    out.send(Address::Mme(ue), Msg::HandoverFailure { ue, target: me });
                }
            }
            Msg::HandoverCommand { ue, target } => {
                if let Some(st) = self.stations.remove(&ue) {
                    self.departed.insert(ue, Departed { target, sgw: st.sgw });
                }
                for pkt in self.queues.remove(&ue).unwrap_or_default() {
                    self.bounce(pkt, out);
                }
                out.send(ue, Msg::HandoverCommand { ue, target });
            }
            Msg::HandoverPreparationFailure { ue, target, reason } => {
                out.send(ue, Msg::HandoverPreparationFailure { ue, target, reason })
            }
            Msg::HandoverConfirm { source, quality } => {
                let Some(sgw) = self.incoming.remove(&src) else {
                    out.audit(Audit::Error(format!("{me}: unexpected handover of {src}")));
                    return;
                };
                self.stations.insert(src, Station { quality, sgw });
                self.departed.remove(&src);
                out.send(
                    Address::Mme(src),
                    Msg::HandoverNotify {
                        ue: src,
                        source,
                        target: me,
                    },
                );
                self.kick(cx, out);
            }
            Msg::PushPolicy { corr, policy } => {
                let (version, scheduler) = (policy.version, policy.scheduler);
                let result = self.policy.apply(policy);
                if result.is_ok() {
                    out.audit(Audit::PolicyInstalled {
                        wap: me,
                        version,
                        scheduler,
                    });
                }
                out.send(src, Msg::SouthboundAck { corr, result });
            }
            Msg::ConfigureCores { corr, active } => {
                let result = configure_comm_cores(&mut self.wap, active, self.stations.len());
                out.send(src, Msg::SouthboundAck { corr, result });
                self.kick(cx, out);
            }
            Msg::Data(pkt) => self.data(cx, src, *pkt, out),
            other => out.audit(Audit::Error(format!("{me}: unexpected {other:?}"))),
        }
    }

    fn data(&mut self, cx: &Ctx, src: NodeId, pkt: Packet, out: &mut Outbox) {
        if pkt.ue == src {
            // Uplink from the terminal.
            let Some(st) = self.stations.get(&src) else {
                return;
            };
            match pkt.route {
                Route::Core => out.send(st.sgw, Msg::data(pkt)),
                Route::Local { lgw } => out.send(lgw, Msg::data(pkt)),
            }
            return;
        }
        let ue = pkt.ue;
        if self.departed.contains_key(&ue) {
            self.bounce(pkt, out);
        } else if self.stations.contains_key(&ue) || self.incoming.contains_key(&ue) {
            self.queues.entry(ue).or_default().push_back(pkt);
            self.kick(cx, out);
        }
    }

    /// Sends a packet for a terminal that has left back towards it.
    fn bounce(&mut self, mut pkt: Packet, out: &mut Outbox) {
        let Some(d) = self.departed.get(&pkt.ue).copied() else { return };
        self.forwarded += 1;
        match pkt.route {
            Route::Core => {
                pkt.forwarded = true;
                out.send(d.sgw, Msg::data(pkt));
            }
            Route::Local { .. } => out.send(d.target, Msg::data(pkt)),
        }
    }

    /// Starts the next transmission if the transmitter is idle.
    fn kick(&mut self, cx: &Ctx, out: &mut Outbox) {
        if self.transmitting {
            return;
        }
        let cap = self.wap.effective_capacity_bps();
        if cap == 0 {
            return;
        }
        let backlogged: Vec<(NodeId, f64)> = self
            .stations
            .iter()
            .filter(|(ue, _)| self.queues.get(ue).is_some_and(|q| !q.is_empty()))
            .map(|(ue, st)| (*ue, st.quality))
            .collect();
        let queues = &self.queues;
        let head_bits = |ue: NodeId| queues[&ue].front().map_or(0, Packet::size_bits);
        let Some(Decision { ue, version, .. }) =
            self.policy.scheduler_mut().pick(&backlogged, cap, head_bits)
        else {
            return;
        };
        if version != self.policy.active().version {
            self.mixed_decisions += 1;
        }
        *self.decisions.entry(version).or_default() += 1;
        let pkt = self
            .queues
            .get_mut(&ue)
            .and_then(VecDeque::pop_front)
            .expect("picked a backlogged terminal");
        let tx_us = (u128::from(pkt.size_bits()) * 1_000_000).div_ceil(u128::from(cap)) as u64;
        self.transmitting = true;
        out.timer(cx.now.after(tx_us), Tick::TxDone(Box::new(pkt)));
    }

    fn report(&mut self, cx: &Ctx, out: &mut Outbox) {
        let interval = cx.config.report_interval_us;
        out.timer(cx.now.after(interval), Tick::Report);
        let cap = self.wap.effective_capacity_bps();
        let rate = |bits: u64| (u128::from(bits) * 1_000_000 / u128::from(interval)) as u64;
        let load = rate(std::mem::take(&mut self.window_bits)).min(cap);
        self.wap.current_load_bps = load;
        self.peak_load_bps = self.peak_load_bps.max(load);
        let window = std::mem::take(&mut self.window_ue_bits);
        self.demands = self
            .stations
            .keys()
            .map(|ue| (*ue, rate(window.get(ue).copied().unwrap_or(0))))
            .collect();
        out.send(
            CONTROLLER,
            Msg::WapReport(Box::new(WapReport {
                wap: self.wap.id,
                access_type: self.wap.access_type,
                load_bps: load,
                capacity_bps: cap,
                attached: self.stations.len() as u32,
                ue_demands: self.demands.clone(),
                policy_version: self.policy.active().version,
                generated_at: cx.now,
            })),
        );
    }
}
