//! Centralised control: the global network view, radio resource
//! assignment, access-point policy, comm-core configuration and VNF
//! orchestration.

mod orchestrate;
mod policy;
mod rrm;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discovery::AccessType;
use crate::engine::{NodeId, SimTime};
use crate::ids::WapId;

pub use orchestrate::{
    orchestrate_vnfs, OrchestrationPlan, ScaleAction, ScaleDirection, Thresholds,
};
pub use policy::{configure_comm_cores, Decision, PolicySlot, Scheduler, SchedulerId, SodaPolicy};
pub use rrm::{greedy_local_assign, objective, rrm_assign, Assignment, RrmDemand, RrmError};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum SouthboundError {
    #[error("no acknowledgement before the deadline")]
    Timeout,
    #[error("policy version {offered} is not newer than {current}")]
    StaleVersion { current: u64, offered: u64 },
    #[error("comm-core set {0:?} is not a subset of the installed cores")]
    InvalidCoreSet(Vec<u32>),
    #[error("terminals are still attached")]
    WapBusy,
    #[error("unknown scheduler `{0}`")]
    UnknownScheduler(String),
}

/// Network functions the orchestrator can scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VnfKind {
    Mme,
    Sgw,
    Pgw,
    Hss,
    Pcrf,
}

impl VnfKind {
    pub const ALL: [VnfKind; 5] = [
        VnfKind::Mme,
        VnfKind::Sgw,
        VnfKind::Pgw,
        VnfKind::Hss,
        VnfKind::Pcrf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VnfKind::Mme => "mme",
            VnfKind::Sgw => "sgw",
            VnfKind::Pgw => "pgw",
            VnfKind::Hss => "hss",
            VnfKind::Pcrf => "pcrf",
        }
    }
}

impl fmt::Display for VnfKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VnfKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VnfKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown network function `{s}`"))
    }
}

/// Periodic state an access point sends up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WapReport {
    pub wap: WapId,
    pub access_type: AccessType,
    pub load_bps: u64,
    /// Effective capacity given the active comm-cores.
    pub capacity_bps: u64,
    pub attached: u32,
    /// Measured per-terminal demand on this access point.
    pub ue_demands: BTreeMap<NodeId, u64>,
    pub policy_version: u64,
    pub generated_at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnfReport {
    pub kind: VnfKind,
    pub instance: NodeId,
    /// Busy fraction over the last reporting interval.
    pub utilization: f64,
    pub generated_at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WapEntry {
    pub access_type: AccessType,
    pub load_bps: u64,
    pub capacity_bps: u64,
    pub attached: u32,
    pub ue_demands: BTreeMap<NodeId, u64>,
    pub age_us: u64,
    pub stale: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnfEntry {
    pub kind: VnfKind,
    pub utilization: f64,
    pub age_us: u64,
    pub stale: bool,
}

/// The controller's snapshot of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalView {
    pub snapshot: SimTime,
    pub max_age_us: u64,
    pub waps: BTreeMap<WapId, WapEntry>,
    pub vnfs: BTreeMap<NodeId, VnfEntry>,
}

impl GlobalView {
    pub fn empty(snapshot: SimTime, max_age_us: u64) -> Self {
        Self {
            snapshot,
            max_age_us,
            waps: BTreeMap::new(),
            vnfs: BTreeMap::new(),
        }
    }

    pub fn fresh_waps(&self) -> impl Iterator<Item = (&WapId, &WapEntry)> {
        self.waps.iter().filter(|(_, e)| !e.stale)
    }
}

/// Builds a view from the latest report of each access point and VNF
/// instance. Entries older than `max_age_us` at `now` are flagged stale.
pub fn collect_view(
    reports: &[WapReport],
    vnf_reports: &[VnfReport],
    now: SimTime,
    max_age_us: u64,
) -> GlobalView {
    let mut view = GlobalView::empty(now, max_age_us);
    let mut newest: BTreeMap<WapId, &WapReport> = BTreeMap::new();
    for r in reports {
        let keep = newest.get(&r.wap).is_none_or(|old| r.generated_at >= old.generated_at);
        if keep {
            newest.insert(r.wap, r);
        }
    }
    for (wap, r) in newest {
        let age_us = now.since(r.generated_at);
        view.waps.insert(
            wap,
            WapEntry {
                access_type: r.access_type,
                load_bps: r.load_bps,
                capacity_bps: r.capacity_bps,
                attached: r.attached,
                ue_demands: r.ue_demands.clone(),
                age_us,
                stale: age_us > max_age_us,
            },
        );
    }
    let mut newest: BTreeMap<NodeId, &VnfReport> = BTreeMap::new();
    for r in vnf_reports {
        let keep = newest
            .get(&r.instance)
            .is_none_or(|old| r.generated_at >= old.generated_at);
        if keep {
            newest.insert(r.instance, r);
        }
    }
    for (instance, r) in newest {
        let age_us = now.since(r.generated_at);
        view.vnfs.insert(
            instance,
            VnfEntry {
                kind: r.kind,
                utilization: r.utilization,
                age_us,
                stale: age_us > max_age_us,
            },
        );
    }
    view
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(wap: u32, at_ms: u64) -> WapReport {
        WapReport {
            wap: WapId(wap),
            access_type: AccessType::Cellular,
            load_bps: 0,
            capacity_bps: 100,
            attached: 0,
            ue_demands: BTreeMap::new(),
            policy_version: 0,
            generated_at: SimTime::from_millis(at_ms),
        }
    }

    #[test]
    fn one_entry_per_reporting_wap() {
        let v = collect_view(
            &[report(1, 90), report(2, 95), report(3, 99)],
            &[],
            SimTime::from_millis(100),
            50_000,
        );
        assert_eq!(v.waps.len(), 3);
        assert!(v.waps.values().all(|e| !e.stale));
    }

    #[test]
    fn old_reports_are_stale() {
        let v = collect_view(&[report(1, 10), report(1, 20)], &[], SimTime::from_millis(100), 50_000);
        assert_eq!(v.waps.len(), 1);
        assert_eq!(v.waps[&WapId(1)].age_us, 80_000);
        assert!(v.waps[&WapId(1)].stale);
        assert_eq!(v.fresh_waps().count(), 0);
    }

    #[test]
    fn no_reports_no_entries() {
        let v = collect_view(&[], &[], SimTime::ZERO, 1);
        assert!(v.waps.is_empty() && v.vnfs.is_empty());
    }
}
