use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SouthboundError;
use crate::discovery::Wap;
use crate::engine::NodeId;

/// Downlink schedulers an access point can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SchedulerId {
    /// Cyclic over backlogged terminals in id order.
    RoundRobin,
    /// Achievable rate over smoothed served throughput.
    ProportionalFair,
    /// Always the terminal with the best radio quality.
    MaxRate,
}

impl SchedulerId {
    pub fn name(self) -> &'static str {
        match self {
            SchedulerId::RoundRobin => "rr",
            SchedulerId::ProportionalFair => "pf",
            SchedulerId::MaxRate => "max-rate",
        }
    }
}

impl fmt::Display for SchedulerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerId {
    type Err = SouthboundError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rr" | "round-robin" | "RoundRobin" => Ok(SchedulerId::RoundRobin),
            "pf" | "proportional-fair" | "ProportionalFair" => Ok(SchedulerId::ProportionalFair),
            "max-rate" | "MaxRate" => Ok(SchedulerId::MaxRate),
            other => Err(SouthboundError::UnknownScheduler(other.to_string())),
        }
    }
}

/// Baseband/RF programme pushed to an access point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SodaPolicy {
    pub version: u64,
    pub scheduler: SchedulerId,
    pub parameters: BTreeMap<String, String>,
    pub phy_parameters: BTreeMap<String, String>,
}

impl SodaPolicy {
    /// What every access point starts with.
    pub fn initial() -> Self {
        Self {
            version: 0,
            scheduler: SchedulerId::RoundRobin,
            parameters: BTreeMap::new(),
            phy_parameters: BTreeMap::new(),
        }
    }

    fn alpha(&self) -> f64 {
        self.parameters
            .get("alpha")
            .and_then(|a| a.parse::<f64>().ok())
            .filter(|a| *a > 0.0 && *a <= 1.0)
            .unwrap_or(0.1)
    }
}

/// One downlink transmission opportunity and the policy that decided it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub ue: NodeId,
    pub version: u64,
    pub scheduler: SchedulerId,
}

#[derive(Debug, Clone)]
enum State {
    RoundRobin { last: Option<NodeId> },
    ProportionalFair { alpha: f64, average: BTreeMap<NodeId, f64> },
    MaxRate,
}

/// A running scheduler instance bound to exactly one policy version.
#[derive(Debug, Clone)]
pub struct Scheduler {
    version: u64,
    id: SchedulerId,
    state: State,
}

impl Scheduler {
    pub fn for_policy(policy: &SodaPolicy) -> Self {
        let state = match policy.scheduler {
            SchedulerId::RoundRobin => State::RoundRobin { last: None },
            SchedulerId::ProportionalFair => State::ProportionalFair {
                alpha: policy.alpha(),
                average: BTreeMap::new(),
            },
            SchedulerId::MaxRate => State::MaxRate,
        };
        Self {
            version: policy.version,
            id: policy.scheduler,
            state,
        }
    }

    /// Chooses who transmits next among `backlogged` `(terminal, quality)`
    /// pairs, then charges `bits(ue)` to the winner. Returns `None` only
    /// when nobody is backlogged.
    pub fn pick(
        &mut self,
        backlogged: &[(NodeId, f64)],
        capacity_bps: u64,
        bits: impl Fn(NodeId) -> u64,
    ) -> Option<Decision> {
        if backlogged.is_empty() {
            return None;
        }
        let ue = match &mut self.state {
            State::RoundRobin { last } => {
                let next = backlogged
                    .iter()
                    .map(|b| b.0)
                    .filter(|u| last.is_none_or(|l| *u > l))
                    .min()
                    .or_else(|| backlogged.iter().map(|b| b.0).min())
                    .expect("non-empty");
                *last = Some(next);
                next
            }
            State::ProportionalFair { alpha, average } => {
                let score = |(ue, q): &(NodeId, f64)| {
                    let avg = average.get(ue).copied().unwrap_or(0.0).max(1.0);
                    q * capacity_bps as f64 / avg
                };
                let best = backlogged
                    .iter()
                    .max_by(|a, b| score(a).total_cmp(&score(b)).then(b.0.cmp(&a.0)))
                    .expect("non-empty")
                    .0;
                let served = bits(best) as f64;
                for (ue, _) in backlogged {
                    average.entry(*ue).or_insert(0.0);
                }
                for (ue, avg) in average.iter_mut() {
                    let x = if *ue == best { served } else { 0.0 };
                    *avg = (1.0 - *alpha) * *avg + *alpha * x;
                }
                best
            }
            State::MaxRate => {
                backlogged
                    .iter()
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                    .expect("non-empty")
                    .0
            }
        };
        Some(Decision {
            ue,
            version: self.version,
            scheduler: self.id,
        })
    }
}

/// The policy an access point runs, swapped only as a whole.
#[derive(Debug, Clone)]
pub struct PolicySlot {
    active: SodaPolicy,
    scheduler: Scheduler,
}

impl Default for PolicySlot {
    fn default() -> Self {
        let active = SodaPolicy::initial();
        let scheduler = Scheduler::for_policy(&active);
        Self { active, scheduler }
    }
}

impl PolicySlot {
    pub fn active(&self) -> &SodaPolicy {
        &self.active
    }

    pub fn scheduler_mut(&mut self) -> &mut Scheduler {
        &mut self.scheduler
    }

    /// Installs `policy` if it is newer than the active one. The scheduler
    /// is rebuilt from scratch so no state crosses versions.
    pub fn apply(&mut self, policy: SodaPolicy) -> Result<(), SouthboundError> {
        if policy.version <= self.active.version {
            return Err(SouthboundError::StaleVersion {
                current: self.active.version,
                offered: policy.version,
            });
        }
        self.scheduler = Scheduler::for_policy(&policy);
        self.active = policy;
        Ok(())
    }
}

/// Switches the given comm-cores on and every other one off.
pub fn configure_comm_cores(
    wap: &mut Wap,
    active: BTreeSet<u32>,
    attached_ues: usize,
) -> Result<(), SouthboundError> {
    if active.iter().any(|&c| c >= wap.comm_cores.total) {
        return Err(SouthboundError::InvalidCoreSet(active.into_iter().collect()));
    }
    if active.is_empty() && attached_ues > 0 {
        return Err(SouthboundError::WapBusy);
    }
    wap.comm_cores.active = active;
    Ok(())
}
