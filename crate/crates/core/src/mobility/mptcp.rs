use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::MobilityError;
use crate::engine::SimTime;
use crate::ids::{FlowId, WapId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubflowId(pub u32);

impl fmt::Display for SubflowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sf{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubflowState {
    Up,
    Failed,
}

/// A run of the connection-level byte stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Segment {
    pub seq: u64,
    pub len: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct Subflow {
    pub id: SubflowId,
    pub interface: WapId,
    /// Path capacity the scheduler weighs this subflow by.
    pub capacity_bps: u64,
    pub state: SubflowState,
    /// Bytes handed to this subflow, retransmissions included.
    pub bytes_carried: u64,
    #[serde(skip)]
    unacked: BTreeMap<u64, (u32, SimTime)>,
    /// Byte allowance carried between scheduling windows; may go negative
    /// by less than one segment.
    #[serde(skip)]
    credit: i64,
}

impl Subflow {
    /// Oldest segment still waiting for an acknowledgement, with its send time.
    pub fn oldest_unacked(&self) -> Option<(u64, SimTime)> {
        self.unacked.iter().map(|(&seq, &(_, at))| (seq, at)).min_by_key(|&(seq, at)| (at, seq))
    }

    pub fn unacked_bytes(&self) -> u64 {
        self.unacked.values().map(|&(l, _)| u64::from(l)).sum()
    }

    pub fn is_up(&self) -> bool {
        self.state == SubflowState::Up
    }
}

/// Sender side of a multipath connection: one shared sequence space spread
/// over per-interface subflows.
#[derive(Debug, Clone, Serialize)]
pub struct MultipathConnection {
    pub id: FlowId,
    subflows: Vec<Subflow>,
    /// Stream length; `None` for an open-ended source.
    total: Option<u64>,
    next_seq: u64,
    #[serde(skip)]
    retransmit: BTreeMap<u64, u32>,
    #[serde(skip)]
    outstanding: BTreeMap<u64, u32>,
    acked_bytes: u64,
    /// Connection-wide sending allowance for `take_paced`.
    #[serde(skip)]
    budget: i64,
}

/// Opens one subflow per distinct interface, in the order given.
pub fn mptcp_open(
    id: FlowId,
    interfaces: &[(WapId, u64)],
    attachments: &BTreeMap<WapId, bool>,
    total: Option<u64>,
) -> Result<MultipathConnection, MobilityError> {
    if interfaces.is_empty() {
        return Err(MobilityError::NoInterfaces);
    }
    let mut seen = BTreeSet::new();
    let mut subflows = Vec::new();
    for &(wap, capacity_bps) in interfaces {
        if !attachments.contains_key(&wap) {
            return Err(MobilityError::InterfaceNotAttached(wap));
        }
        if seen.insert(wap) {
            subflows.push(Subflow {
                id: SubflowId(subflows.len() as u32),
                interface: wap,
                capacity_bps,
                state: SubflowState::Up,
                bytes_carried: 0,
                unacked: BTreeMap::new(),
                credit: 0,
            });
        }
    }
    Ok(MultipathConnection {
        id,
        subflows,
        total,
        next_seq: 0,
        retransmit: BTreeMap::new(),
        outstanding: BTreeMap::new(),
        acked_bytes: 0,
        budget: 0,
    })
}

/// Splits `pending` bytes over the Up subflows in proportion to their
/// capacity. Shares are exact integers: floors first, then the leftover
/// bytes go to the largest fractional parts, lower ids first on ties.
/// Failed subflows get 0.
pub fn mptcp_schedule(
    pending: u64,
    conn: &MultipathConnection,
) -> Result<Vec<(SubflowId, u64)>, MobilityError> {
    let up: Vec<&Subflow> = conn.subflows.iter().filter(|s| s.is_up()).collect();
    if up.is_empty() {
        return Err(MobilityError::AllPathsFailed);
    }
    let all_zero = up.iter().all(|s| s.capacity_bps == 0);
    let weight = |s: &Subflow| -> u128 {
        if all_zero {
            1
        } else {
            u128::from(s.capacity_bps)
        }
    };
    let sum: u128 = up.iter().map(|s| weight(s)).sum();
    let p = u128::from(pending);
    let mut shares: BTreeMap<SubflowId, (u64, u128)> = BTreeMap::new();
    let mut given = 0u128;
    for s in &up {
        let exact = p * weight(s);
        let floor = exact / sum;
        given += floor;
        shares.insert(s.id, (floor as u64, exact % sum));
    }
    let mut order: Vec<(SubflowId, u128)> = shares.iter().map(|(id, (_, r))| (*id, *r)).collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    for (id, _) in order.into_iter().take((p - given) as usize) {
        shares.get_mut(&id).expect("listed").0 += 1;
    }
    Ok(conn
        .subflows
        .iter()
        .map(|s| (s.id, shares.get(&s.id).map_or(0, |x| x.0)))
        .collect())
}

/// Marks `subflow` Failed and queues its unacknowledged data for the
/// survivors. Failing an already failed (or unknown) subflow does nothing.
pub fn mptcp_on_path_failure(
    conn: &mut MultipathConnection,
    subflow: SubflowId,
) -> Result<(), MobilityError> {
    let Some(sf) = conn.subflows.iter_mut().find(|s| s.id == subflow) else {
        return Ok(());
    };
    if sf.state == SubflowState::Failed {
        return Ok(());
    }
    sf.state = SubflowState::Failed;
    sf.credit = 0;
    for (seq, (len, _)) in std::mem::take(&mut sf.unacked) {
        if conn.outstanding.contains_key(&seq) {
            conn.retransmit.insert(seq, len);
        }
    }
    if conn.subflows.iter().any(Subflow::is_up) {
        Ok(())
    } else {
        Err(MobilityError::AllPathsFailed)
    }
}

impl MultipathConnection {
    pub fn subflows(&self) -> &[Subflow] {
        &self.subflows
    }

    pub fn subflow(&self, id: SubflowId) -> Option<&Subflow> {
        self.subflows.iter().find(|s| s.id == id)
    }

    pub fn subflow_mut(&mut self, id: SubflowId) -> Option<&mut Subflow> {
        self.subflows.iter_mut().find(|s| s.id == id)
    }

    pub fn total(&self) -> Option<u64> {
        self.total
    }

    pub fn acked_bytes(&self) -> u64 {
        self.acked_bytes
    }

    /// Bytes of new data handed out so far.
    pub fn sent_bytes(&self) -> u64 {
        self.next_seq
    }

    pub fn up_capacity_bps(&self) -> u64 {
        self.subflows
            .iter()
            .filter(|s| s.is_up())
            .map(|s| s.capacity_bps)
            .sum()
    }

    /// Data waiting to go out: queued retransmissions plus unsent bytes.
    pub fn pending_bytes(&self) -> u64 {
        let again: u64 = self.retransmit.values().map(|&l| u64::from(l)).sum();
        let fresh = self.total.map_or(u64::MAX, |t| t - self.next_seq);
        again.saturating_add(fresh)
    }

    pub fn is_complete(&self) -> bool {
        self.total
            .is_some_and(|t| self.next_seq == t && self.outstanding.is_empty())
    }

    /// Next segment for subflow `idx`, retransmissions first.
    fn cut(&mut self, idx: usize, mss: u32, now: SimTime) -> Option<Segment> {
        let seg = if let Some((seq, len)) = self.retransmit.pop_first() {
            Segment { seq, len }
        } else {
            let left = self.total.map_or(u64::MAX, |t| t - self.next_seq);
            if left == 0 {
                return None;
            }
            let len = u64::from(mss).min(left) as u32;
            let seg = Segment {
                seq: self.next_seq,
                len,
            };
            self.next_seq += u64::from(len);
            self.outstanding.insert(seg.seq, len);
            seg
        };
        let sf = &mut self.subflows[idx];
        sf.credit -= i64::from(seg.len);
        sf.bytes_carried += u64::from(seg.len);
        sf.unacked.insert(seg.seq, (seg.len, now));
        Some(seg)
    }

    /// Adds `share` to the subflow's allowance and cuts segments of at most
    /// `mss` bytes against it, retransmissions first.
    pub fn take_segments(
        &mut self,
        subflow: SubflowId,
        share: u64,
        mss: u32,
        now: SimTime,
    ) -> Vec<Segment> {
        let Some(idx) = self.subflows.iter().position(|s| s.id == subflow) else {
            return Vec::new();
        };
        if !self.subflows[idx].is_up() {
            return Vec::new();
        }
        self.subflows[idx].credit += share as i64;
        let mut out = Vec::new();
        while self.subflows[idx].credit > 0 {
            match self.cut(idx, mss, now) {
                Some(seg) => out.push(seg),
                None => break,
            }
        }
        if out.is_empty() {
            // Nothing to send: do not bank allowance for later bursts.
            self.subflows[idx].credit = self.subflows[idx].credit.min(0);
        }
        out
    }

    /// Spreads `allowance` more bytes over the Up subflows with
    /// [`mptcp_schedule`] and cuts segments against it. Unlike calling
    /// [`Self::take_segments`] per subflow, the overdraft is shared: the
    /// connection never runs more than one segment ahead of the summed
    /// allowances, however many subflows there are or have failed.
    pub fn take_paced(
        &mut self,
        allowance: u64,
        mss: u32,
        now: SimTime,
    ) -> Vec<(SubflowId, Segment)> {
        let Ok(shares) = mptcp_schedule(allowance, self) else {
            return Vec::new();
        };
        for (id, share) in shares {
            if let Some(sf) = self.subflow_mut(id) {
                sf.credit += share as i64;
            }
        }
        self.budget += allowance as i64;
        let mut out = Vec::new();
        while self.budget > 0 {
            // Most credit first, lower id on ties.
            let Some(idx) = (0..self.subflows.len())
                .filter(|&i| self.subflows[i].is_up() && self.subflows[i].credit > 0)
                .max_by_key(|&i| (self.subflows[i].credit, std::cmp::Reverse(i)))
            else {
                break;
            };
            match self.cut(idx, mss, now) {
                Some(seg) => {
                    self.budget -= i64::from(seg.len);
                    out.push((self.subflows[idx].id, seg));
                }
                None => break,
            }
        }
        if self.pending_bytes() == 0 {
            self.budget = self.budget.min(0);
            for sf in &mut self.subflows {
                sf.credit = sf.credit.min(0);
            }
        }
        out
    }

    /// Records a connection-level acknowledgement. Returns true the first
    /// time `seq` is acknowledged.
    pub fn on_ack(&mut self, seq: u64) -> bool {
        for sf in &mut self.subflows {
            sf.unacked.remove(&seq);
        }
        self.retransmit.remove(&seq);
        match self.outstanding.remove(&seq) {
            Some(len) => {
                self.acked_bytes += u64::from(len);
                true
            }
            None => false,
        }
    }

    /// Up subflows holding a segment unacknowledged for at least `rto_us`.
    pub fn expired(&self, now: SimTime, rto_us: u64) -> Vec<SubflowId> {
        self.subflows
            .iter()
            .filter(|s| s.is_up())
            .filter(|s| s.unacked.values().any(|&(_, at)| now.since(at) >= rto_us))
            .map(|s| s.id)
            .collect()
    }
}
