use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{GlobalView, VnfKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub scale_up: f64,
    pub scale_down: f64,
    /// Ceiling on instances per kind.
    pub max_instances: u32,
}

impl Thresholds {
    pub fn new(scale_up: f64, scale_down: f64, max_instances: u32) -> Result<Self, String> {
        if !(0.0..=1.0).contains(&scale_down) || !(0.0..=1.0).contains(&scale_up) {
            return Err("utilisation thresholds must lie in [0, 1]".into());
        }
        if scale_up <= scale_down {
            return Err(format!(
                "scale-up threshold {scale_up} must exceed scale-down threshold {scale_down}"
            ));
        }
        Ok(Self {
            scale_up,
            scale_down,
            max_instances: max_instances.max(1),
        })
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            scale_up: 0.8,
            scale_down: 0.2,
            max_instances: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaleDirection {
    ScaleUp,
    ScaleDown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleAction {
    pub kind: VnfKind,
    pub direction: ScaleDirection,
    pub target: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrchestrationPlan {
    pub actions: Vec<ScaleAction>,
}

impl OrchestrationPlan {
    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// One scaling step per kind whose mean utilisation over fresh reports
/// left the `[scale_down, scale_up]` band. Counts never go below 1.
pub fn orchestrate_vnfs(
    view: &GlobalView,
    instances: &BTreeMap<VnfKind, u32>,
    thresholds: &Thresholds,
) -> OrchestrationPlan {
    let mut sums: BTreeMap<VnfKind, (f64, u32)> = BTreeMap::new();
    for e in view.vnfs.values().filter(|e| !e.stale) {
        let s = sums.entry(e.kind).or_insert((0.0, 0));
        s.0 += e.utilization;
        s.1 += 1;
    }
    let mut plan = OrchestrationPlan::default();
    for (kind, (sum, n)) in sums {
        let count = instances.get(&kind).copied().unwrap_or(1).max(1);
        let mean = sum / f64::from(n);
        if mean > thresholds.scale_up && count < thresholds.max_instances {
            plan.actions.push(ScaleAction {
                kind,
                direction: ScaleDirection::ScaleUp,
                target: count + 1,
            });
        } else if mean < thresholds.scale_down && count > 1 {
            plan.actions.push(ScaleAction {
                kind,
                direction: ScaleDirection::ScaleDown,
                target: count - 1,
            });
        }
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::{collect_view, VnfReport};
    use crate::engine::{NodeId, SimTime};

    fn view(utils: &[(VnfKind, f64)]) -> GlobalView {
        let reports: Vec<VnfReport> = utils
            .iter()
            .enumerate()
            .map(|(i, &(kind, utilization))| VnfReport {
                kind,
                instance: NodeId(i as u32 + 10),
                utilization,
                generated_at: SimTime::ZERO,
            })
            .collect();
        collect_view(&[], &reports, SimTime::ZERO, 1_000)
    }

    #[test]
    fn scale_up_over_threshold() {
        let plan = orchestrate_vnfs(
            &view(&[(VnfKind::Mme, 0.9)]),
            &[(VnfKind::Mme, 1)].into(),
            &Thresholds::default(),
        );
        assert_eq!(
            plan.actions,
            vec![ScaleAction {
                kind: VnfKind::Mme,
                direction: ScaleDirection::ScaleUp,
                target: 2
            }]
        );
    }

    #[test]
    fn scale_down_under_threshold_keeps_one() {
        let th = Thresholds::default();
        let v = view(&[(VnfKind::Mme, 0.1), (VnfKind::Mme, 0.1)]);
        let plan = orchestrate_vnfs(&v, &[(VnfKind::Mme, 2)].into(), &th);
        assert_eq!(plan.actions[0].target, 1);
        let v = view(&[(VnfKind::Mme, 0.1)]);
        assert!(orchestrate_vnfs(&v, &[(VnfKind::Mme, 1)].into(), &th).is_empty());
    }

    #[test]
    fn in_band_is_quiet() {
        let plan = orchestrate_vnfs(
            &view(&[(VnfKind::Sgw, 0.5)]),
            &[(VnfKind::Sgw, 1)].into(),
            &Thresholds::default(),
        );
        assert!(plan.is_empty());
    }

    #[test]
    fn thresholds_must_be_ordered() {
        assert!(Thresholds::new(0.2, 0.8, 4).is_err());
        assert!(Thresholds::new(0.8, 0.2, 4).is_ok());
    }
}
