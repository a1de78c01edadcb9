use crate::controller::{VnfKind, VnfReport};
use crate::engine::{NodeId, SimTime};
use crate::epc::{Hss, Mme, Pcrf, Pgw, Sgw};
use crate::proto::{Msg, Tick};

use super::{Audit, Ctx, Outbox, CONTROLLER};

/// The function a VNF instance runs.
#[derive(Debug, Clone)]
pub enum VnfFunc {
    Hss(Hss),
    Pcrf(Pcrf),
    Mme(Mme),
    Sgw(Sgw),
    Pgw(Pgw),
    /// Serving and PDN gateway in one box.
    Gw(Sgw, Pgw),
}

/// A network-function instance. Every message it handles occupies it for
/// the kind's service time, one message at a time.
#[derive(Debug, Clone)]
pub struct VnfNode {
    pub kind: VnfKind,
    pub func: VnfFunc,
    pub retired: bool,
    busy_until: SimTime,
    busy_window_us: u64,
    busy_total_us: u64,
    handled: u64,
}

impl VnfNode {
    pub fn new(kind: VnfKind, func: VnfFunc) -> Self {
        Self {
            kind,
            func,
            retired: false,
            busy_until: SimTime::ZERO,
            busy_window_us: 0,
            busy_total_us: 0,
            handled: 0,
        }
    }

    pub fn handled(&self) -> u64 {
        self.handled
    }

    pub fn busy_total_us(&self) -> u64 {
        self.busy_total_us
    }

    /// Handles one delivery and returns when its replies may leave.
    pub fn handle(&mut self, cx: &Ctx, src: NodeId, msg: Msg, out: &mut Outbox) -> SimTime {
        if let Msg::Tick(Tick::Report) = msg {
            self.report(cx, out);
            return cx.now;
        }
        let service = cx.config.service_us(self.kind);
        let start = cx.now.max(self.busy_until);
        self.busy_until = start.after(service);
        self.busy_window_us += service;
        self.busy_total_us += service;
        self.handled += 1;
        match &mut self.func {
            VnfFunc::Hss(hss) => match msg {
                Msg::AuthInfoRequest { ue, imsi } => {
                    let vector = hss.auth_vector(&imsi).map(Box::new);
                    out.send(src, Msg::AuthInfoAnswer { ue, vector });
                }
                other => out.audit(Audit::Error(format!("hss: unexpected {other:?}"))),
            },
            VnfFunc::Pcrf(pcrf) => match msg {
                Msg::PolicyRequest(d) => {
                    let rule = pcrf
                        .authorize(&d)
                        .unwrap_or_else(|_| crate::epc::PolicyRule::best_effort());
                    out.send(src, Msg::PolicyAnswer { descriptor: d, rule });
                }
                other => out.audit(Audit::Error(format!("pcrf: unexpected {other:?}"))),
            },
            VnfFunc::Mme(m) => m.handle(cx, src, msg, out),
            VnfFunc::Sgw(s) => s.handle(cx, src, msg, out),
            VnfFunc::Pgw(p) => p.handle(cx, src, msg, out),
            VnfFunc::Gw(s, p) => {
                let to_pgw = match &msg {
                    Msg::PgwCreate { .. } | Msg::PolicyAnswer { .. } | Msg::Tick(_) => true,
                    // Uplink the SGW half passed on, or fresh downlink from outside.
                    Msg::Data(pkt) if pkt.is_downlink() => src != cx.me && !pkt.forwarded,
                    Msg::Data(_) => src == cx.me,
                    _ => false,
                };
                if to_pgw {
                    p.handle(cx, src, msg, out)
                } else {
                    s.handle(cx, src, msg, out)
                }
            }
        }
        self.busy_until
    }

    fn report(&mut self, cx: &Ctx, out: &mut Outbox) {
        let interval = cx.config.report_interval_us;
        out.timer(cx.now.after(interval), Tick::Report);
        let busy = std::mem::take(&mut self.busy_window_us);
        if self.retired {
            return;
        }
        out.send(
            CONTROLLER,
            Msg::VnfReport(VnfReport {
                kind: self.kind,
                instance: cx.me,
                utilization: (busy as f64 / interval as f64).min(1.0),
                generated_at: cx.now,
            }),
        );
    }
}
