use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::GlobalView;
use crate::engine::NodeId;
use crate::ids::WapId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RrmDemand {
    pub ue: NodeId,
    pub demand_bps: u64,
    pub reachable: BTreeSet<WapId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum RrmError {
    #[error("no assignment fits every terminal within capacity")]
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub map: BTreeMap<NodeId, WapId>,
    /// Smallest residual capacity over the fresh access points, in b/s.
    /// Negative when an assignment overloads someone.
    pub objective: i128,
}

struct Problem {
    waps: Vec<WapId>,
    base: Vec<i128>,
    ues: Vec<(NodeId, i128, Vec<usize>)>,
}

fn problem(ues: &[RrmDemand], view: &GlobalView) -> Problem {
    let (waps, base): (Vec<WapId>, Vec<i128>) = view
        .fresh_waps()
        .map(|(w, e)| (*w, i128::from(e.capacity_bps) - i128::from(e.load_bps)))
        .unzip();
    let index: BTreeMap<WapId, usize> = waps.iter().enumerate().map(|(i, w)| (*w, i)).collect();
    let mut ues: Vec<(NodeId, i128, Vec<usize>)> = ues
        .iter()
        .map(|u| {
            let reach = u.reachable.iter().filter_map(|w| index.get(w).copied()).collect();
            (u.ue, i128::from(u.demand_bps), reach)
        })
        .collect();
    ues.sort_by_key(|u| u.0);
    Problem { waps, base, ues }
}

/// Objective of an arbitrary assignment against `view`.
pub fn objective(map: &BTreeMap<NodeId, WapId>, ues: &[RrmDemand], view: &GlobalView) -> i128 {
    let p = problem(ues, view);
    let mut residual = p.base.clone();
    for (ue, demand, _) in &p.ues {
        if let Some(i) = map.get(ue).and_then(|w| p.waps.iter().position(|x| x == w)) {
            residual[i] -= demand;
        }
    }
    residual.into_iter().min().unwrap_or(0)
}

struct Search<'a> {
    p: &'a Problem,
    residual: Vec<i128>,
    choice: Vec<usize>,
    /// Demand of terminals not yet placed, from index i onward.
    suffix: Vec<i128>,
    best: Option<(i128, Vec<usize>)>,
}

impl Search<'_> {
    fn bound(&self, i: usize) -> i128 {
        let current = self.residual.iter().copied().min().unwrap_or(0);
        let m = self.residual.len() as i128;
        let total: i128 = self.residual.iter().sum();
        // The minimum never exceeds the mean of what will be left.
        let mean = (total - self.suffix[i]).div_euclid(m.max(1));
        current.min(mean)
    }

    fn run(&mut self, i: usize) {
        if i == self.p.ues.len() {
            let obj = self.residual.iter().copied().min().unwrap_or(0);
            if self.best.as_ref().is_none_or(|(b, _)| obj > *b) {
                self.best = Some((obj, self.choice.clone()));
            }
            return;
        }
        if let Some((best, _)) = &self.best {
            if self.bound(i) <= *best {
                return;
            }
        }
        let (_, demand, reach) = &self.p.ues[i];
        for &w in reach {
            if self.residual[w] < *demand {
                continue;
            }
            self.residual[w] -= demand;
            self.choice.push(w);
            self.run(i + 1);
            self.choice.pop();
            self.residual[w] += demand;
        }
    }
}

/// Assigns every terminal to a reachable fresh access point so that the
/// smallest residual capacity across access points is as large as
/// possible, never exceeding any capacity.
///
/// Exact branch and bound. Terminals are placed in id order and access
/// points tried in id order; only strictly better leaves replace the
/// incumbent, so among optimal assignments the lexicographically first is
/// returned.
pub fn rrm_assign(ues: &[RrmDemand], view: &GlobalView) -> Result<Assignment, RrmError> {
    let p = problem(ues, view);
    if p.ues.iter().any(|u| u.2.is_empty()) {
        return Err(RrmError::Infeasible);
    }
    let mut suffix = vec![0i128; p.ues.len() + 1];
    for i in (0..p.ues.len()).rev() {
        suffix[i] = suffix[i + 1] + p.ues[i].1;
    }
    let mut s = Search {
        p: &p,
        residual: p.base.clone(),
        choice: Vec::with_capacity(p.ues.len()),
        suffix,
        best: None,
    };
    s.run(0);
    let (objective, choice) = s.best.ok_or(RrmError::Infeasible)?;
    let map = p
        .ues
        .iter()
        .zip(choice)
        .map(|(u, w)| (u.0, p.waps[w]))
        .collect();
    Ok(Assignment { map, objective })
}

/// Uncoordinated baseline: each terminal independently joins the reachable
/// access point that looked emptiest in the shared snapshot, unaware of the
/// others' choices.
pub fn greedy_local_assign(ues: &[RrmDemand], view: &GlobalView) -> Assignment {
    let p = problem(ues, view);
    let mut map = BTreeMap::new();
    for (ue, _, reach) in &p.ues {
        let pick = reach
            .iter()
            .copied()
            .max_by(|&a, &b| p.base[a].cmp(&p.base[b]).then(b.cmp(&a)));
        if let Some(w) = pick {
            map.insert(*ue, p.waps[w]);
        }
    }
    let objective = objective(&map, ues, view);
    Assignment { map, objective }
}
