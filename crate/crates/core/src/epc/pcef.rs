use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Breakout, ChargingRecord, FlowDescriptor, Imsi, PolicyAction, PolicyRule};
use crate::engine::SimTime;
use crate::ids::FlowId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketInfo {
    pub flow: FlowId,
    pub direction: Direction,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enforcement {
    Forward,
    Drop,
    /// No rule yet; hold the packet and ask the policy function.
    NeedsAuthorization,
}

#[derive(Debug, Clone)]
struct Window {
    start: SimTime,
    allowance: i128,
    used: i128,
}

#[derive(Debug, Clone)]
struct FlowCharging {
    descriptor: FlowDescriptor,
    rule: PolicyRule,
    window: Window,
    /// Open record: start time and counters since the last report.
    record: Option<(SimTime, u64, u64)>,
    forwarded_up: u64,
    forwarded_down: u64,
}

/// Per-gateway enforcement point: applies granted rules, polices rate per
/// window and keeps the charging counters records are cut from.
///
/// Rate policing works on fixed windows. A packet passes while the bytes
/// already forwarded in the window are below the window's allowance, so a
/// window may overrun by at most one packet; the overrun is deducted from
/// the next window's allowance. Over any `n` consecutive windows the flow
/// therefore forwards at most `n × budget + MTU` bytes.
#[derive(Debug, Clone)]
pub struct Pcef {
    breakout: Breakout,
    window_us: u64,
    flows: BTreeMap<FlowId, FlowCharging>,
    awaiting: BTreeSet<FlowId>,
    forwarded_by_imsi: BTreeMap<Imsi, u64>,
    dropped: BTreeMap<FlowId, u64>,
}

impl Pcef {
    pub fn new(breakout: Breakout, window_us: u64) -> Self {
        assert!(window_us > 0, "enforcement window must be positive");
        Self {
            breakout,
            window_us,
            flows: BTreeMap::new(),
            awaiting: BTreeSet::new(),
            forwarded_by_imsi: BTreeMap::new(),
            dropped: BTreeMap::new(),
        }
    }

    pub fn breakout(&self) -> Breakout {
        self.breakout
    }

    fn budget(&self, rule: &PolicyRule) -> i128 {
        (i128::from(rule.max_bitrate_bps) * i128::from(self.window_us)) / 8_000_000
    }

    pub fn knows(&self, flow: FlowId) -> bool {
        self.flows.contains_key(&flow)
    }

    /// Marks `flow` as waiting for a decision. Returns false if a request
    /// is already outstanding.
    pub fn request_authorization(&mut self, flow: FlowId) -> bool {
        self.awaiting.insert(flow)
    }

    pub fn install(&mut self, descriptor: FlowDescriptor, rule: PolicyRule, now: SimTime) {
        self.awaiting.remove(&descriptor.id);
        let budget = self.budget(&rule);
        self.flows.insert(
            descriptor.id,
            FlowCharging {
                descriptor,
                rule,
                window: Window {
                    start: now,
                    allowance: budget,
                    used: 0,
                },
                record: None,
                forwarded_up: 0,
                forwarded_down: 0,
            },
        );
    }

    pub fn rule(&self, flow: FlowId) -> Option<&PolicyRule> {
        self.flows.get(&flow).map(|f| &f.rule)
    }

    pub fn enforce(&mut self, now: SimTime, pkt: PacketInfo) -> Enforcement {
        let window_us = self.window_us;
        let Some(budget) = self.flows.get(&pkt.flow).map(|f| self.budget(&f.rule)) else {
            return Enforcement::NeedsAuthorization;
        };
        let state = self.flows.get_mut(&pkt.flow).expect("checked");
        if state.rule.action == PolicyAction::Drop {
            *self.dropped.entry(pkt.flow).or_default() += 1;
            return Enforcement::Drop;
        }
        // Acks and other control packets carry nothing to meter.
        if pkt.bytes == 0 {
            return Enforcement::Forward;
        }

        let w = &mut state.window;
        let elapsed = now.since(w.start) / window_us;
        if elapsed > 0 {
            let carry = if elapsed == 1 {
                (w.used - w.allowance).max(0)
            } else {
                0
            };
            w.allowance = budget - carry;
            w.used = 0;
            w.start = w.start.after(elapsed * window_us);
        }
        if w.used >= w.allowance {
            *self.dropped.entry(pkt.flow).or_default() += 1;
            return Enforcement::Drop;
        }
        w.used += i128::from(pkt.bytes);

        let record = state.record.get_or_insert((now, 0, 0));
        match pkt.direction {
            Direction::Up => {
                record.1 += pkt.bytes;
                state.forwarded_up += pkt.bytes;
            }
            Direction::Down => {
                record.2 += pkt.bytes;
                state.forwarded_down += pkt.bytes;
            }
        }
        *self
            .forwarded_by_imsi
            .entry(state.descriptor.imsi.clone())
            .or_default() += pkt.bytes;
        Enforcement::Forward
    }

    fn cut(&self, flow: &FlowCharging, now: SimTime) -> ChargingRecord {
        let (start, up, down) = flow.record.unwrap_or((now, 0, 0));
        ChargingRecord {
            record_id: 0,
            imsi: flow.descriptor.imsi.clone(),
            flow_id: flow.descriptor.name.clone(),
            start,
            end: now,
            bytes_up: up,
            bytes_down: down,
            rate_id: flow.rule.charging_rate_id.clone(),
            breakout: self.breakout,
        }
    }

    /// Closes `flow`'s open record. A flow that never forwarded anything
    /// still yields a zero-byte record.
    pub fn close(&mut self, flow: FlowId, now: SimTime) -> Option<ChargingRecord> {
        let state = self.flows.get(&flow)?;
        let record = self.cut(state, now);
        self.flows.remove(&flow);
        Some(record)
    }

    /// Interim records for every flow with an open record; counters restart.
    pub fn interim(&mut self, now: SimTime) -> Vec<ChargingRecord> {
        let mut out = Vec::new();
        let ids: Vec<FlowId> = self
            .flows
            .iter()
            .filter(|(_, f)| f.record.is_some())
            .map(|(&id, _)| id)
            .collect();
        for id in ids {
            let record = self.cut(&self.flows[&id], now);
            self.flows.get_mut(&id).expect("listed").record = None;
            out.push(record);
        }
        out
    }

    pub fn close_all(&mut self, now: SimTime) -> Vec<ChargingRecord> {
        let ids: Vec<FlowId> = self.flows.keys().copied().collect();
        ids.into_iter().filter_map(|id| self.close(id, now)).collect()
    }

    pub fn forwarded_by_imsi(&self) -> &BTreeMap<Imsi, u64> {
        &self.forwarded_by_imsi
    }

    pub fn dropped(&self, flow: FlowId) -> u64 {
        self.dropped.get(&flow).copied().unwrap_or(0)
    }

    pub fn active_flows(&self) -> usize {
        self.flows.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epc::{Destination, Pcrf, QosSubscription, ServiceClass};

    fn descriptor(bps: u64) -> FlowDescriptor {
        FlowDescriptor {
            id: FlowId(7),
            name: "video1".into(),
            imsi: "001010000000001".parse().unwrap(),
            ue_ip: None,
            destination: Destination::Internet,
            class: ServiceClass::Video,
            requested_bps: bps,
        }
    }

    fn pcef_with(rule: PolicyRule) -> Pcef {
        let mut pcef = Pcef::new(Breakout::Core, 100_000);
        pcef.install(descriptor(rule.max_bitrate_bps), rule, SimTime::ZERO);
        pcef
    }

    fn video_rule(bps: u64) -> PolicyRule {
        Pcrf::default().authorize_with(&descriptor(bps), &QosSubscription::default())
    }

    fn down(bytes: u64) -> PacketInfo {
        PacketInfo {
            flow: FlowId(7),
            direction: Direction::Down,
            bytes,
        }
    }

    #[test]
    fn unknown_flow_needs_authorization() {
        let mut pcef = Pcef::new(Breakout::Core, 1_000);
        assert_eq!(pcef.enforce(SimTime::ZERO, down(10)), Enforcement::NeedsAuthorization);
    }

    #[test]
    fn forward_counts_bytes() {
        let mut pcef = pcef_with(video_rule(100_000_000));
        assert_eq!(pcef.enforce(SimTime::ZERO, down(1500)), Enforcement::Forward);
        let rec = pcef.close(FlowId(7), SimTime::from_millis(1)).unwrap();
        assert_eq!(rec.bytes_down, 1500);
    }

    #[test]
    fn drop_rule_leaves_counters_alone() {
        let mut rule = video_rule(100_000_000);
        rule.action = PolicyAction::Drop;
        let mut pcef = pcef_with(rule);
        assert_eq!(pcef.enforce(SimTime::ZERO, down(1500)), Enforcement::Drop);
        let rec = pcef.close(FlowId(7), SimTime::from_millis(1)).unwrap();
        assert_eq!(rec.total_bytes(), 0);
        assert!(pcef.forwarded_by_imsi().is_empty());
    }

    #[test]
    fn ten_packets_sum_to_fifteen_thousand() {
        let expected: u64 = std::iter::repeat_n(1500u64, 10).sum();
        let mut pcef = pcef_with(video_rule(100_000_000));
        for i in 0..10 {
            assert_eq!(
                pcef.enforce(SimTime::from_micros(i * 100), down(1500)),
                Enforcement::Forward
            );
        }
        let rec = pcef.close(FlowId(7), SimTime::from_millis(5)).unwrap();
        assert_eq!(rec.bytes_down, expected);
        assert_eq!(rec.bytes_up, 0);
        assert_eq!(rec.rate_id, "video");
        assert_eq!(rec.breakout, Breakout::Core);
    }

    #[test]
    fn zero_byte_flow_still_closes_with_a_record() {
        let mut pcef = pcef_with(video_rule(1_000));
        let rec = pcef.close(FlowId(7), SimTime::from_millis(5)).unwrap();
        assert_eq!(rec.total_bytes(), 0);
    }

    #[test]
    fn policing_caps_each_window() {
        // 1.2 Mb/s over 100 ms windows = 15_000 bytes per window.
        let mut pcef = pcef_with(video_rule(1_200_000));
        let mut forwarded = 0;
        for i in 0..20 {
            if pcef.enforce(SimTime::from_micros(i * 10), down(1500)) == Enforcement::Forward {
                forwarded += 1500;
            }
        }
        assert_eq!(forwarded, 15_000);
        // Next window is fresh.
        assert_eq!(
            pcef.enforce(SimTime::from_millis(100), down(1500)),
            Enforcement::Forward
        );
    }

    #[test]
    fn paced_flow_at_granted_rate_is_never_policed() {
        // 5 Mb/s paced with 1500-byte packets: one every 2400 us; 100 ms
        // windows hold 41.67 packets so windows alternate 41/42 arrivals.
        let mut pcef = pcef_with(video_rule(5_000_000));
        for i in 0..2_000u64 {
            let t = SimTime::from_micros(i * 2_400 + 37);
            assert_eq!(pcef.enforce(t, down(1500)), Enforcement::Forward, "packet {i}");
        }
    }

    #[test]
    fn interim_records_partition_the_counters() {
        let mut pcef = pcef_with(video_rule(100_000_000));
        pcef.enforce(SimTime::ZERO, down(1000));
        let first = pcef.interim(SimTime::from_millis(1));
        pcef.enforce(SimTime::from_millis(2), down(500));
        let last = pcef.close(FlowId(7), SimTime::from_millis(3)).unwrap();
        assert_eq!(first[0].bytes_down + last.bytes_down, 1500);
        assert_eq!(pcef.forwarded_by_imsi().values().sum::<u64>(), 1500);
    }
}
