use std::collections::BTreeMap;

use crate::engine::{NodeId, SimTime};
use crate::epc::FlowDescriptor;
use crate::ids::{FlowId, WapId};
use crate::mobility::{
    mptcp_on_path_failure, mptcp_open, MultipathConnection, Route, SubflowId,
};
use crate::proto::{FlowOpen, Msg, Packet, PacketKind, Tick, MSS};

use super::{Audit, Ctx, Outbox};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowState {
    Running,
    /// Every byte sent and acknowledged.
    Finished,
    /// Closed by the terminal.
    Stopped,
    /// No path left.
    Stalled,
}

/// Server side of one flow.
#[derive(Debug, Clone)]
pub struct ServerFlow {
    pub ue: NodeId,
    pub descriptor: FlowDescriptor,
    pub conn: MultipathConnection,
    pub multipath: bool,
    /// Gateway the flow currently leaves through.
    pub gateway: NodeId,
    pub route: Route,
    pub state: FlowState,
    pub opened_at: SimTime,
    pub finished_at: Option<SimTime>,
    /// Sub-byte remainder of the rate allowance, in bit-microseconds.
    remainder: u128,
}

/// The Internet side: one server that sources every flow's downlink.
#[derive(Debug, Clone, Default)]
pub struct Endpoint {
    pub flows: BTreeMap<FlowId, ServerFlow>,
}

impl Endpoint {
    pub fn handle(&mut self, cx: &Ctx, src: NodeId, msg: Msg, out: &mut Outbox) {
        match msg {
            Msg::Tick(Tick::Flow(id)) => self.tick(cx, id, out),
            Msg::Data(pkt) => self.uplink(cx, src, *pkt, out),
            other => out.audit(Audit::Error(format!("server: unexpected {other:?}"))),
        }
    }

    fn uplink(&mut self, cx: &Ctx, src: NodeId, pkt: Packet, out: &mut Outbox) {
        match pkt.kind {
            PacketKind::Open(open) => self.open(cx, src, pkt.ue, pkt.route, *open, out),
            PacketKind::Rebind(_) => {
                let Some(f) = self.flows.get_mut(&pkt.flow) else { return };
                if f.gateway != src {
                    let end = Packet::new(pkt.flow, pkt.subflow, f.ue, PacketKind::End, f.route);
                    out.send(f.gateway, Msg::data(end));
                    f.gateway = src;
                }
                f.route = pkt.route;
            }
            PacketKind::Ack(seq) => {
                if let Some(f) = self.flows.get_mut(&pkt.flow) {
                    f.conn.on_ack(seq);
                }
            }
            PacketKind::Close => {
                let Some(f) = self.flows.get_mut(&pkt.flow) else { return };
                if f.state == FlowState::Running || f.state == FlowState::Stalled {
                    f.state = FlowState::Stopped;
                    f.finished_at = Some(cx.now);
                    let end = Packet::new(pkt.flow, pkt.subflow, f.ue, PacketKind::End, f.route);
                    out.send(f.gateway, Msg::data(end));
                    out.audit(Audit::FlowFinished {
                        flow: pkt.flow,
                        sent_bytes: f.conn.sent_bytes(),
                    });
                }
            }
            PacketKind::Data(_) | PacketKind::End => {}
        }
    }

    fn open(
        &mut self,
        cx: &Ctx,
        gateway: NodeId,
        ue: NodeId,
        route: Route,
        open: FlowOpen,
        out: &mut Outbox,
    ) {
        let id = open.descriptor.id;
        if self.flows.contains_key(&id) {
            return;
        }
        let paths: Vec<(WapId, u64)> = open.subflows.iter().map(|&(_, w, c)| (w, c)).collect();
        let attached: BTreeMap<WapId, bool> = paths.iter().map(|&(w, _)| (w, true)).collect();
        let conn = match mptcp_open(id, &paths, &attached, open.total) {
            Ok(c) => c,
            Err(e) => {
                return out.audit(Audit::FlowRejected {
                    flow: id,
                    reason: e.to_string(),
                })
            }
        };
        self.flows.insert(
            id,
            ServerFlow {
                ue,
                multipath: open.multipath(),
                descriptor: open.descriptor,
                conn,
                gateway,
                route,
                state: FlowState::Running,
                opened_at: cx.now,
                finished_at: None,
                remainder: 0,
            },
        );
        self.tick(cx, id, out);
    }

    fn tick(&mut self, cx: &Ctx, id: FlowId, out: &mut Outbox) {
        let Some(f) = self.flows.get_mut(&id) else { return };
        if f.state != FlowState::Running {
            return;
        }
        if f.multipath {
            for sf in f.conn.expired(cx.now, cx.config.mptcp_rto_us) {
                out.audit(Audit::PathFailed { flow: id, subflow: sf });
                if mptcp_on_path_failure(&mut f.conn, sf).is_err() {
                    out.audit(Audit::AllPathsFailed { flow: id });
                    f.state = FlowState::Stalled;
                    return;
                }
            }
        }
        f.remainder += u128::from(f.descriptor.requested_bps) * u128::from(cx.config.flow_tick_us);
        let allowance = (f.remainder / 8_000_000) as u64;
        f.remainder %= 8_000_000;
        for (sf, seg) in f.conn.take_paced(allowance, MSS, cx.now) {
            if !f.multipath {
                // Single-path flows ride a reliable bearer; no end-to-end acks.
                f.conn.on_ack(seg.seq);
            }
            let pkt = Packet::new(id, sf, f.ue, PacketKind::Data(seg), f.route);
            out.send(f.gateway, Msg::data(pkt));
        }
        if f.conn.is_complete() {
            f.state = FlowState::Finished;
            f.finished_at = Some(cx.now);
            let end = Packet::new(id, SubflowId(0), f.ue, PacketKind::End, f.route);
            out.send(f.gateway, Msg::data(end));
            out.audit(Audit::FlowFinished {
                flow: id,
                sent_bytes: f.conn.sent_bytes(),
            });
            return;
        }
        out.timer(cx.now.after(cx.config.flow_tick_us), Tick::Flow(id));
    }
}
