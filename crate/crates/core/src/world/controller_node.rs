use std::collections::{BTreeMap, BTreeSet};

use crate::controller::{
    collect_view, greedy_local_assign, orchestrate_vnfs, rrm_assign, GlobalView, RrmDemand,
    SchedulerId, SodaPolicy, SouthboundError, VnfKind, VnfReport, WapReport,
};
use crate::engine::NodeId;
use crate::ids::WapId;
use crate::proto::{Msg, Tick};

use super::{Audit, Ctx, Outbox};

/// What a push-policy directive carries besides the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyRequest {
    pub scheduler: SchedulerId,
    /// Explicit version; the next one for the access point if `None`.
    pub version: Option<u64>,
    pub parameters: BTreeMap<String, String>,
    pub phy_parameters: BTreeMap<String, String>,
}

/// The network controller: keeps the newest report from every access
/// point and VNF instance, drives the southbound API and decides RRM and
/// scaling from the resulting view.
#[derive(Debug, Clone, Default)]
pub struct ControllerNode {
    wap_reports: BTreeMap<WapId, WapReport>,
    vnf_reports: BTreeMap<NodeId, VnfReport>,
    outstanding: BTreeMap<u64, (WapId, &'static str)>,
    next_corr: u64,
    versions: BTreeMap<WapId, u64>,
    pub instances: BTreeMap<VnfKind, u32>,
}

impl ControllerNode {
    pub fn new(instances: BTreeMap<VnfKind, u32>) -> Self {
        Self {
            instances,
            ..Self::default()
        }
    }

    pub fn view(&self, cx: &Ctx) -> GlobalView {
        let waps: Vec<WapReport> = self.wap_reports.values().cloned().collect();
        let vnfs: Vec<VnfReport> = self.vnf_reports.values().cloned().collect();
        collect_view(&waps, &vnfs, cx.now, cx.config.max_age_us)
    }

    /// Commands still waiting for an answer.
    pub fn outstanding(&self) -> usize {
        self.outstanding.len()
    }

    pub fn handle(&mut self, cx: &Ctx, _src: NodeId, msg: Msg, out: &mut Outbox) {
        match msg {
            Msg::WapReport(r) => {
                let newer = self
                    .wap_reports
                    .get(&r.wap)
                    .is_none_or(|old| r.generated_at >= old.generated_at);
                if newer {
                    self.wap_reports.insert(r.wap, *r);
                }
            }
            Msg::VnfReport(r) => {
                self.vnf_reports.insert(r.instance, r);
            }
            Msg::SouthboundAck { corr, result } => self.settle(corr, result, out),
            Msg::Tick(Tick::SouthboundTimeout(corr)) => {
                self.settle(corr, Err(SouthboundError::Timeout), out)
            }
            Msg::Tick(Tick::Orchestrate) => {
                if let Some(every) = cx.config.orchestrate_interval_us {
                    out.timer(cx.now.after(every), Tick::Orchestrate);
                }
                self.orchestrate(cx, out);
            }
            other => out.audit(Audit::Error(format!("controller: unexpected {other:?}"))),
        }
    }

    fn settle(&mut self, corr: u64, result: Result<(), SouthboundError>, out: &mut Outbox) {
        // A late ack after the timeout, or a timeout after the ack.
        let Some((wap, command)) = self.outstanding.remove(&corr) else { return };
        out.audit(Audit::Southbound {
            corr,
            wap,
            command,
            result,
        });
    }

    fn command(&mut self, cx: &Ctx, wap: WapId, command: &'static str, out: &mut Outbox) -> u64 {
        self.next_corr += 1;
        let corr = self.next_corr;
        self.outstanding.insert(corr, (wap, command));
        out.timer(
            cx.now.after(cx.config.southbound_timeout_us),
            Tick::SouthboundTimeout(corr),
        );
        corr
    }

    pub fn push_policy(&mut self, cx: &Ctx, wap: WapId, req: PolicyRequest, out: &mut Outbox) {
        let last = self.versions.get(&wap).copied().unwrap_or(0);
        let version = req.version.unwrap_or(last + 1);
        self.versions.insert(wap, last.max(version));
        let corr = self.command(cx, wap, "push-policy", out);
        let policy = SodaPolicy {
            version,
            scheduler: req.scheduler,
            parameters: req.parameters,
            phy_parameters: req.phy_parameters,
        };
        out.send(wap, Msg::PushPolicy { corr, policy });
    }

    pub fn set_cores(&mut self, cx: &Ctx, wap: WapId, active: BTreeSet<u32>, out: &mut Outbox) {
        let corr = self.command(cx, wap, "set-cores", out);
        out.send(wap, Msg::ConfigureCores { corr, active });
    }

    pub fn export_view(&self, cx: &Ctx, out: &mut Outbox) {
        out.audit(Audit::ViewExported(Box::new(self.view(cx))));
    }

    fn orchestrate(&mut self, cx: &Ctx, out: &mut Outbox) {
        let view = self.view(cx);
        let plan = orchestrate_vnfs(&view, &self.instances, &cx.config.thresholds);
        for a in plan.actions {
            self.instances.insert(a.kind, a.target);
            out.scale(a);
        }
    }

    /// Reassigns terminals across access points of the same radio to
    /// maximise the smallest spare capacity, and directs every terminal
    /// whose assignment changed to hand over.
    pub fn rebalance(&mut self, cx: &Ctx, out: &mut Outbox) {
        let mut view = self.view(cx);
        // Each terminal counts once, at the access point carrying most of it.
        let mut current: BTreeMap<NodeId, (WapId, u64)> = BTreeMap::new();
        for (w, e) in view.fresh_waps() {
            for (&ue, &d) in &e.ue_demands {
                let better = current.get(&ue).is_none_or(|&(_, best)| d > best);
                if better {
                    current.insert(ue, (*w, d));
                }
            }
        }
        let slot_of = |w: &WapId, v: &GlobalView| v.waps[w].access_type.slot();
        let demands: Vec<RrmDemand> = current
            .iter()
            .map(|(&ue, &(w, d))| RrmDemand {
                ue,
                demand_bps: d,
                reachable: view
                    .fresh_waps()
                    .filter(|(x, _)| slot_of(x, &view) == slot_of(&w, &view))
                    .map(|(x, _)| *x)
                    .collect(),
            })
            .collect();
        // Measured load includes the terminals being placed.
        for &(w, d) in current.values() {
            if let Some(e) = view.waps.get_mut(&w) {
                e.load_bps = e.load_bps.saturating_sub(d);
            }
        }
        let greedy = greedy_local_assign(&demands, &view);
        let rrm = rrm_assign(&demands, &view).ok();
        let mut moves = 0;
        if let Some(a) = &rrm {
            for (ue, target) in &a.map {
                if current.get(ue).is_some_and(|&(w, _)| w != *target) {
                    moves += 1;
                    out.send(*ue, Msg::HandoverDirective { target: *target });
                }
            }
        }
        out.audit(Audit::Rebalanced {
            objective: rrm.map(|a| a.objective),
            greedy_objective: greedy.objective,
            moves,
        });
    }
}
