//! Deterministic discrete-event core.
//!
//! The engine owns a virtual clock in integer microseconds, a priority queue
//! ordered by `(fire_at, id)`, the link topology used to time message
//! delivery, and the seeded random source every component draws from.
//!
//! Handlers never see the queue directly: they receive one [`Event`] at a
//! time and may call [`Engine::schedule`], [`Engine::send`] or
//! [`Engine::send_at`] to produce further events.

mod rng;
mod topology;
mod trace;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use rng::RngStreams;
pub use topology::{Link, LinkState, Topology};
pub use trace::Trace;

/// Virtual time in microseconds since simulation start.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    /// `self + us`, saturating at [`SimTime::MAX`].
    pub const fn after(self, us: u64) -> Self {
        SimTime(self.0.saturating_add(us))
    }

    pub const fn since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

/// Opaque identifier for any simulated entity.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Monotone event identifier; doubles as the tie-break for equal fire times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventId(pub u64);

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("cannot schedule at {at} while the clock is at {now}")]
    SchedulingInPast { now: SimTime, at: SimTime },
    #[error("no route from {src} to {dst}")]
    NoRoute { src: NodeId, dst: NodeId },
    #[error("invalid link {a}-{b}: {reason}")]
    InvalidLink { a: NodeId, b: NodeId, reason: &'static str },
    #[error("unknown link {a}-{b}")]
    UnknownLink { a: NodeId, b: NodeId },
}

/// A message in transit between two nodes.
#[derive(Debug, Clone)]
pub struct Envelope<M> {
    pub src: NodeId,
    pub dst: NodeId,
    pub size_bits: u64,
    pub sent_at: SimTime,
    /// Every node the message traverses, `src` first and `dst` last.
    pub path: Vec<NodeId>,
    pub msg: M,
}

#[derive(Debug, Clone)]
pub enum Payload<M> {
    Message(Envelope<M>),
    Timer(M),
}

#[derive(Debug, Clone)]
pub struct Event<M> {
    pub id: EventId,
    pub fire_at: SimTime,
    pub target: NodeId,
    pub payload: Payload<M>,
}

struct Queued<M>(Event<M>);

impl<M> Queued<M> {
    fn key(&self) -> (SimTime, EventId) {
        (self.0.fire_at, self.0.id)
    }
}

impl<M> PartialEq for Queued<M> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<M> Eq for Queued<M> {}

impl<M> PartialOrd for Queued<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for Queued<M> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Outcome of a [`Engine::send`] call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SendReceipt {
    pub id: EventId,
    /// `None` when the message was dropped at send time.
    pub deliver_at: Option<SimTime>,
}

impl SendReceipt {
    pub fn dropped(&self) -> bool {
        self.deliver_at.is_none()
    }
}

/// Cumulative message accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub fired: u64,
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
}

impl Counters {
    /// Messages still travelling.
    pub fn in_flight(&self) -> u64 {
        self.sent - self.delivered - self.dropped
    }
}

/// Returned by [`Engine::run_until`]; counts only what happened in that call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunStats {
    pub events_fired: u64,
    pub drops: u64,
    pub clock: SimTime,
}

pub trait Handler<M> {
    fn on_event(&mut self, engine: &mut Engine<M>, event: Event<M>);
}

impl<M, F> Handler<M> for F
where
    F: FnMut(&mut Engine<M>, Event<M>),
{
    fn on_event(&mut self, engine: &mut Engine<M>, event: Event<M>) {
        self(engine, event)
    }
}

pub struct Engine<M> {
    now: SimTime,
    next_id: u64,
    queue: BinaryHeap<Reverse<Queued<M>>>,
    topology: Topology,
    rng: RngStreams,
    trace: Trace,
    counters: Counters,
}

impl<M: fmt::Debug> Engine<M> {
    pub fn new(seed: u64) -> Self {
        Self {
            now: SimTime::ZERO,
            next_id: 0,
            queue: BinaryHeap::new(),
            topology: Topology::default(),
            rng: RngStreams::new(seed),
            trace: Trace::default(),
            counters: Counters::default(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn topology_mut(&mut self) -> &mut Topology {
        &mut self.topology
    }

    pub fn rng(&self) -> &RngStreams {
        &self.rng
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn trace_mut(&mut self) -> &mut Trace {
        &mut self.trace
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Time of the next queued event, if any.
    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|Reverse(q)| q.0.fire_at)
    }

    /// Appends a free-form line to the trace (and its digest).
    pub fn note(&mut self, line: impl AsRef<str>) {
        let now = self.now;
        self.trace.record(now, line.as_ref());
    }

    fn alloc_id(&mut self) -> EventId {
        let id = EventId(self.next_id);
        self.next_id += 1;
        id
    }

    fn check_not_past(&self, at: SimTime) -> Result<(), SimError> {
        if at < self.now {
            Err(SimError::SchedulingInPast { now: self.now, at })
        } else {
            Ok(())
        }
    }

    /// Enqueues a timer for `target` at `at`.
    pub fn schedule(&mut self, target: NodeId, tag: M, at: SimTime) -> Result<EventId, SimError> {
        self.check_not_past(at)?;
        let id = self.alloc_id();
        self.queue.push(Reverse(Queued(Event {
            id,
            fire_at: at,
            target,
            payload: Payload::Timer(tag),
        })));
        Ok(id)
    }

    /// Sends `msg` from `src` to `dst` now. See [`Engine::send_at`].
    pub fn send(
        &mut self,
        src: NodeId,
        dst: NodeId,
        msg: M,
        size_bits: u64,
    ) -> Result<SendReceipt, SimError> {
        self.send_at(src, dst, msg, size_bits, self.now)
    }

    /// Sends `msg` leaving `src` at `depart`.
    ///
    /// Each hop adds FIFO queueing behind earlier transmissions on the same
    /// link direction, serialization `ceil(size_bits / capacity)` and the
    /// link latency. A hop in the `Down` state (or a full buffer) drops the
    /// message: the drop is counted and traced and nothing is delivered.
    pub fn send_at(
        &mut self,
        src: NodeId,
        dst: NodeId,
        msg: M,
        size_bits: u64,
        depart: SimTime,
    ) -> Result<SendReceipt, SimError> {
        self.check_not_past(depart)?;
        let path = self
            .topology
            .route(src, dst)
            .ok_or(SimError::NoRoute { src, dst })?;
        let id = self.alloc_id();
        self.counters.sent += 1;

        let deliver_at = self.topology.reserve(&path, size_bits, depart);
        let Some(deliver_at) = deliver_at else {
            self.counters.dropped += 1;
            let line = format!("drop {id} {src}->{dst} {msg:?}");
            self.trace.record(self.now, &line);
            return Ok(SendReceipt { id, deliver_at: None });
        };

        self.queue.push(Reverse(Queued(Event {
            id,
            fire_at: deliver_at,
            target: dst,
            payload: Payload::Message(Envelope {
                src,
                dst,
                size_bits,
                sent_at: depart,
                path,
                msg,
            }),
        })));
        Ok(SendReceipt {
            id,
            deliver_at: Some(deliver_at),
        })
    }

    /// Processes every event with `fire_at <= until` in `(fire_at, id)`
    /// order. The clock ends at `until`, or at the last fired event when the
    /// queue drains first.
    pub fn run_until<H: Handler<M>>(&mut self, until: SimTime, handler: &mut H) -> RunStats {
        let mut fired = 0;
        let mut drops = 0;
        while let Some(Reverse(head)) = self.queue.peek() {
            if head.0.fire_at > until {
                break;
            }
            let Reverse(Queued(event)) = self.queue.pop().expect("peeked");
            self.now = event.fire_at;
            self.counters.fired += 1;
            fired += 1;

            if let Payload::Message(env) = &event.payload {
                if !self.topology.path_is_up(&env.path) {
                    self.counters.dropped += 1;
                    drops += 1;
                    let line = format!(
                        "drop {} {}->{} in-flight {:?}",
                        event.id, env.src, env.dst, env.msg
                    );
                    self.trace.record(self.now, &line);
                    continue;
                }
                self.counters.delivered += 1;
            }

            let line = match &event.payload {
                Payload::Message(env) => {
                    format!("{} {}->{} {:?}", event.id, env.src, env.dst, env.msg)
                }
                Payload::Timer(tag) => format!("{} timer@{} {:?}", event.id, event.target, tag),
            };
            self.trace.record(self.now, &line);
            handler.on_event(self, event);
        }
        if self.queue.is_empty() {
            // Drained: the clock stays at the last fired event.
        } else if until > self.now {
            self.now = until;
        }
        RunStats {
            events_fired: fired,
            drops,
            clock: self.now,
        }
    }

    /// Hex SHA-256 over every traced line so far.
    pub fn trace_digest(&self) -> String {
        self.trace.digest()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(engine: &mut Engine<&'static str>) -> (NodeId, NodeId) {
        let a = NodeId(1);
        let b = NodeId(2);
        engine
            .topology_mut()
            .add_link(a, b, 2_000, 10_000_000)
            .unwrap();
        (a, b)
    }

    #[test]
    fn scheduled_event_fires_at_its_time() {
        let mut engine = Engine::new(0);
        engine
            .schedule(NodeId(0), "e", SimTime::from_micros(5_000))
            .unwrap();
        let mut seen = Vec::new();
        engine.run_until(SimTime::from_secs(1), &mut |eng: &mut Engine<_>, ev: Event<_>| {
            seen.push((eng.now(), ev.fire_at));
        });
        assert_eq!(seen, vec![(SimTime::from_micros(5_000), SimTime::from_micros(5_000))]);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut engine: Engine<&str> = Engine::new(0);
        engine.schedule(NodeId(0), "tick", SimTime::from_micros(10)).unwrap();
        engine.run_until(SimTime::from_micros(10), &mut |_: &mut Engine<_>, _: Event<_>| {});
        assert_eq!(engine.now(), SimTime::from_micros(10));
        let err = engine
            .schedule(NodeId(0), "late", SimTime::from_micros(5))
            .unwrap_err();
        assert_eq!(
            err,
            SimError::SchedulingInPast {
                now: SimTime::from_micros(10),
                at: SimTime::from_micros(5)
            }
        );
    }

    #[test]
    fn equal_times_fire_in_insertion_order() {
        let mut engine = Engine::new(0);
        for tag in ["first", "second", "third"] {
            engine.schedule(NodeId(0), tag, SimTime::from_micros(7)).unwrap();
        }
        let mut order = Vec::new();
        engine.run_until(SimTime::from_micros(7), &mut |_: &mut Engine<_>, ev: Event<_>| {
            if let Payload::Timer(tag) = ev.payload {
                order.push(tag);
            }
        });
        assert_eq!(order, vec!["first", "second", "third"]);
    }

    #[test]
    fn latency_is_added_to_delivery() {
        let mut engine = Engine::new(0);
        let (a, b) = line(&mut engine);
        engine.schedule(a, "go", SimTime::from_micros(10_000)).unwrap();
        let mut deliveries = Vec::new();
        engine.run_until(SimTime::from_secs(1), &mut |eng: &mut Engine<_>, ev: Event<_>| {
            match ev.payload {
                Payload::Timer(_) => {
                    eng.send(a, b, "tiny", 0).unwrap();
                }
                Payload::Message(_) => deliveries.push(eng.now()),
            }
        });
        assert_eq!(deliveries, vec![SimTime::from_micros(12_000)]);
    }

    #[test]
    fn serialization_delay_matches_hand_computation() {
        // 1_000_000 bits / 10_000_000 bit/s = 0.1 s = 100_000 us.
        let expected_us = 1_000_000u64 * 1_000_000 / 10_000_000;
        assert_eq!(expected_us, 100_000);

        let mut engine = Engine::new(0);
        let (a, b) = (NodeId(1), NodeId(2));
        engine.topology_mut().add_link(a, b, 0, 10_000_000).unwrap();
        let receipt = engine.send(a, b, "bulk", 1_000_000).unwrap();
        assert_eq!(receipt.deliver_at, Some(SimTime::from_micros(expected_us)));
    }

    #[test]
    fn back_to_back_sends_queue_fifo_on_a_link() {
        let mut engine = Engine::new(0);
        let (a, b) = (NodeId(1), NodeId(2));
        engine.topology_mut().add_link(a, b, 1_000, 8_000_000).unwrap();
        // 12_000 bits at 8 Mb/s = 1_500 us each.
        let r1 = engine.send(a, b, "p1", 12_000).unwrap();
        let r2 = engine.send(a, b, "p2", 12_000).unwrap();
        assert_eq!(r1.deliver_at, Some(SimTime::from_micros(2_500)));
        assert_eq!(r2.deliver_at, Some(SimTime::from_micros(4_000)));
        // The reverse direction has its own queue.
        let r3 = engine.send(b, a, "p3", 12_000).unwrap();
        assert_eq!(r3.deliver_at, Some(SimTime::from_micros(2_500)));
    }

    #[test]
    fn down_link_records_a_drop() {
        let mut engine = Engine::new(0);
        let (a, b) = line(&mut engine);
        engine.topology_mut().set_state(a, b, LinkState::Down).unwrap();
        let receipt = engine.send(a, b, "lost", 100).unwrap();
        assert!(receipt.dropped());
        let stats = engine.run_until(SimTime::from_secs(1), &mut |_: &mut Engine<_>, _: Event<_>| {
            panic!("nothing should be delivered")
        });
        assert_eq!(stats.events_fired, 0);
        let c = engine.counters();
        assert_eq!((c.sent, c.delivered, c.dropped), (1, 0, 1));
    }

    #[test]
    fn link_failing_mid_flight_drops_the_message() {
        let mut engine = Engine::new(0);
        let (a, b) = line(&mut engine);
        engine.send(a, b, "m", 0).unwrap();
        engine.topology_mut().set_state(a, b, LinkState::Down).unwrap();
        let stats = engine.run_until(SimTime::from_secs(1), &mut |_: &mut Engine<_>, _: Event<_>| {});
        assert_eq!(stats.drops, 1);
        assert_eq!(engine.counters().delivered, 0);
    }

    #[test]
    fn no_route_is_an_error() {
        let mut engine: Engine<&str> = Engine::new(0);
        let err = engine.send(NodeId(1), NodeId(9), "x", 1).unwrap_err();
        assert_eq!(err, SimError::NoRoute { src: NodeId(1), dst: NodeId(9) });
    }

    #[test]
    fn multi_hop_delay_is_summed_per_hop() {
        let mut engine: Engine<&str> = Engine::new(0);
        let (a, b, c) = (NodeId(1), NodeId(2), NodeId(3));
        engine.topology_mut().add_link(a, b, 100, 1_000_000).unwrap();
        engine.topology_mut().add_link(b, c, 300, 2_000_000).unwrap();
        // hop1: 1000 bits @1Mb/s = 1000us + 100; hop2: 500us + 300.
        let r = engine.send(a, c, "x", 1_000).unwrap();
        assert_eq!(r.deliver_at, Some(SimTime::from_micros(1_900)));
    }

    #[test]
    fn empty_queue_fires_nothing() {
        let mut engine: Engine<&str> = Engine::new(0);
        let stats = engine.run_until(SimTime::from_secs(1), &mut |_: &mut Engine<_>, _: Event<_>| {});
        assert_eq!(stats.events_fired, 0);
    }

    #[test]
    fn run_until_stops_at_the_horizon() {
        let mut engine = Engine::new(0);
        for ms in [1, 2, 3] {
            engine.schedule(NodeId(0), ms, SimTime::from_millis(ms)).unwrap();
        }
        let stats = engine.run_until(SimTime::from_millis(2), &mut |_: &mut Engine<_>, _: Event<_>| {});
        assert_eq!(stats.events_fired, 2);
        assert_eq!(stats.clock, SimTime::from_millis(2));
        assert_eq!(engine.pending(), 1);
    }

    #[test]
    fn clock_rests_on_last_event_when_queue_drains() {
        let mut engine = Engine::new(0);
        engine.schedule(NodeId(0), 1u8, SimTime::from_millis(3)).unwrap();
        let stats = engine.run_until(SimTime::from_secs(1), &mut |_: &mut Engine<_>, _: Event<_>| {});
        assert_eq!(stats.clock, SimTime::from_millis(3));
    }

    fn ping_pong(seed: u64) -> String {
        use rand::Rng;
        let mut engine = Engine::new(seed);
        let (a, b) = (NodeId(1), NodeId(2));
        engine.topology_mut().add_link(a, b, 250, 1_000_000).unwrap();
        let mut rng = engine.rng().stream("jitter");
        engine.schedule(a, 0u32, SimTime::ZERO).unwrap();
        engine.run_until(SimTime::from_secs(1), &mut |eng: &mut Engine<u32>, ev: Event<u32>| {
            let (n, here) = match ev.payload {
                Payload::Timer(n) => (n, ev.target),
                Payload::Message(env) => (env.msg, env.dst),
            };
            if n < 50 {
                let there = if here == a { b } else { a };
                let size = rng.random_range(0..5_000);
                eng.send(here, there, n + 1, size).unwrap();
            }
        });
        engine.trace_digest()
    }

    #[test]
    fn identical_runs_have_identical_digests() {
        assert_eq!(ping_pong(7), ping_pong(7));
        assert_ne!(ping_pong(7), ping_pong(8));
    }

    #[test]
    fn engine_is_send() {
        fn assert_send<T: Send>() {}
        assert_send::<Engine<String>>();
    }
}
