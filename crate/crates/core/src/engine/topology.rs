use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{NodeId, SimError, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkState {
    Up,
    Down,
}

/// A bidirectional link with an independent FIFO transmit queue per direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Link {
    pub endpoints: (NodeId, NodeId),
    pub latency_us: u64,
    pub capacity_bps: u64,
    pub state: LinkState,
    /// Tail-drop threshold on queued bits per direction; `None` is unbounded.
    pub buffer_bits: Option<u64>,
    busy_until: [SimTime; 2],
}

impl Link {
    /// Whole microseconds needed to clock `bits` onto the link.
    pub fn serialization_us(&self, bits: u64) -> u64 {
        let num = u128::from(bits) * 1_000_000;
        let cap = u128::from(self.capacity_bps);
        num.div_ceil(cap) as u64
    }

    fn direction(&self, from: NodeId) -> usize {
        usize::from(from != self.endpoints.0)
    }
}

/// Static shortest-hop routing over an undirected link graph.
///
/// Routes ignore link state: a path that crosses a `Down` link is still the
/// route, and messages on it are dropped.
#[derive(Debug, Default, Clone)]
pub struct Topology {
    links: Vec<Link>,
    index: BTreeMap<(NodeId, NodeId), usize>,
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    routes: HashMap<(NodeId, NodeId), Option<Vec<NodeId>>>,
}

fn key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Topology {
    pub fn add_link(
        &mut self,
        a: NodeId,
        b: NodeId,
        latency_us: u64,
        capacity_bps: u64,
    ) -> Result<(), SimError> {
        if a == b {
            return Err(SimError::InvalidLink { a, b, reason: "self loop" });
        }
        if capacity_bps == 0 {
            return Err(SimError::InvalidLink { a, b, reason: "capacity must be positive" });
        }
        if self.index.contains_key(&key(a, b)) {
            return Err(SimError::InvalidLink { a, b, reason: "duplicate link" });
        }
        self.index.insert(key(a, b), self.links.len());
        self.links.push(Link {
            endpoints: (a, b),
            latency_us,
            capacity_bps,
            state: LinkState::Up,
            buffer_bits: None,
            busy_until: [SimTime::ZERO; 2],
        });
        self.adjacency.entry(a).or_default().insert(b);
        self.adjacency.entry(b).or_default().insert(a);
        self.routes.clear();
        Ok(())
    }

    pub fn link(&self, a: NodeId, b: NodeId) -> Option<&Link> {
        self.index.get(&key(a, b)).map(|&i| &self.links[i])
    }

    pub fn link_mut(&mut self, a: NodeId, b: NodeId) -> Option<&mut Link> {
        self.index.get(&key(a, b)).map(|&i| &mut self.links[i])
    }

    pub fn set_state(&mut self, a: NodeId, b: NodeId, state: LinkState) -> Result<(), SimError> {
        let link = self.link_mut(a, b).ok_or(SimError::UnknownLink { a, b })?;
        link.state = state;
        Ok(())
    }

    pub fn set_buffer(&mut self, a: NodeId, b: NodeId, bits: Option<u64>) -> Result<(), SimError> {
        let link = self.link_mut(a, b).ok_or(SimError::UnknownLink { a, b })?;
        link.buffer_bits = bits;
        Ok(())
    }

    /// Neighbours of `node` in ascending id order.
    pub fn neighbours(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&node).into_iter().flatten().copied()
    }

    pub fn links(&self) -> impl Iterator<Item = &Link> {
        self.links.iter()
    }

    /// Shortest-hop path, ties broken towards lower node ids.
    pub fn route(&mut self, src: NodeId, dst: NodeId) -> Option<Vec<NodeId>> {
        if let Some(cached) = self.routes.get(&(src, dst)) {
            return cached.clone();
        }
        let path = self.bfs(src, dst);
        self.routes.insert((src, dst), path.clone());
        path
    }

    fn bfs(&self, src: NodeId, dst: NodeId) -> Option<Vec<NodeId>> {
        if src == dst {
            return Some(vec![src]);
        }
        let mut parent: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let mut frontier = VecDeque::from([src]);
        parent.insert(src, src);
        while let Some(node) = frontier.pop_front() {
            for next in self.neighbours(node) {
                if parent.contains_key(&next) {
                    continue;
                }
                parent.insert(next, node);
                if next == dst {
                    let mut path = vec![dst];
                    let mut cur = dst;
                    while cur != src {
                        cur = parent[&cur];
                        path.push(cur);
                    }
                    path.reverse();
                    return Some(path);
                }
                frontier.push_back(next);
            }
        }
        None
    }

    pub fn path_is_up(&self, path: &[NodeId]) -> bool {
        path.windows(2).all(|w| {
            self.link(w[0], w[1])
                .is_some_and(|l| l.state == LinkState::Up)
        })
    }

    /// Minimum capacity along `path`; `None` for a single-node path.
    pub fn bottleneck_bps(&self, path: &[NodeId]) -> Option<u64> {
        path.windows(2)
            .filter_map(|w| self.link(w[0], w[1]).map(|l| l.capacity_bps))
            .min()
    }

    /// Books transmission slots along `path` and returns the arrival time,
    /// or `None` if a hop is down or a buffer would overflow. Nothing is
    /// booked when the message is dropped.
    pub(super) fn reserve(
        &mut self,
        path: &[NodeId],
        size_bits: u64,
        depart: SimTime,
    ) -> Option<SimTime> {
        let mut plan = Vec::with_capacity(path.len());
        let mut t = depart;
        for hop in path.windows(2) {
            let idx = *self.index.get(&key(hop[0], hop[1]))?;
            let link = &self.links[idx];
            if link.state == LinkState::Down {
                return None;
            }
            let dir = link.direction(hop[0]);
            let start = t.max(link.busy_until[dir]);
            if let Some(buffer) = link.buffer_bits {
                let backlog_us = start.since(t);
                let backlog_bits =
                    u128::from(backlog_us) * u128::from(link.capacity_bps) / 1_000_000;
                if backlog_bits + u128::from(size_bits) > u128::from(buffer) {
                    return None;
                }
            }
            let done = start.after(link.serialization_us(size_bits));
            plan.push((idx, dir, done));
            t = done.after(link.latency_us);
        }
        for (idx, dir, done) in plan {
            self.links[idx].busy_until[dir] = done;
        }
        Some(t)
    }
}
