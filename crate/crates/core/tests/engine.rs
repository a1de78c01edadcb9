use comn_core::engine::{Engine, Event, LinkState, NodeId, Payload, SimTime};
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Tag {
    /// Hops left before the message stops being forwarded.
    Hop(u8),
    Toggle(u32, u32, bool),
}

#[derive(Debug, Clone)]
struct Plan {
    links: Vec<(u32, u32, u64, u64)>,
    sends: Vec<(u32, u32, u64, u8, u64)>,
    toggles: Vec<(usize, u64, bool)>,
}

fn plan() -> impl Strategy<Value = Plan> {
    let link = (1u32..6, 1u32..6, 0u64..5_000, 1_000_000u64..100_000_000);
    (
        proptest::collection::vec(link, 1..10),
        proptest::collection::vec((1u32..6, 1u32..6, 0u64..50_000, 0u8..4, 100u64..20_000), 1..40),
        proptest::collection::vec((0usize..10, 0u64..60_000, any::<bool>()), 0..6),
    )
        .prop_map(|(links, sends, toggles)| Plan {
            links,
            sends,
            toggles,
        })
}

struct Outcome {
    digest: String,
    sent: u64,
    delivered: u64,
    dropped: u64,
    pending: usize,
    causal: bool,
}

fn run(p: &Plan, seed: u64) -> Outcome {
    let mut e: Engine<Tag> = Engine::new(seed);
    let mut links = Vec::new();
    for &(a, b, lat, cap) in &p.links {
        if e.topology_mut().add_link(NodeId(a), NodeId(b), lat, cap).is_ok() {
            links.push((a, b));
        }
    }
    for &(i, at, up) in &p.toggles {
        if let Some(&(a, b)) = links.get(i % links.len().max(1)) {
            e.schedule(NodeId(a), Tag::Toggle(a, b, up), SimTime::from_micros(at)).unwrap();
        }
    }
    for &(src, dst, at, hops, bits) in &p.sends {
        // Unroutable pairs are an error, not a send.
        let _ = e.send_at(NodeId(src), NodeId(dst), Tag::Hop(hops), bits, SimTime::from_micros(at));
    }
    let mut causal = true;
    let mut last = SimTime::ZERO;
    let mut handler = |e: &mut Engine<Tag>, ev: Event<Tag>| {
        causal &= e.now() == ev.fire_at && ev.fire_at >= last;
        last = ev.fire_at;
        match ev.payload {
            Payload::Timer(Tag::Toggle(a, b, up)) => {
                let state = if up { LinkState::Up } else { LinkState::Down };
                e.topology_mut().set_state(NodeId(a), NodeId(b), state).unwrap();
            }
            Payload::Message(env) => {
                causal &= env.sent_at <= ev.fire_at;
                if let Tag::Hop(n) = env.msg {
                    if n > 0 {
                        let _ = e.send(env.dst, env.src, Tag::Hop(n - 1), env.size_bits);
                    }
                }
            }
            Payload::Timer(_) => {}
        }
    };
    e.run_until(SimTime::from_secs(10), &mut handler);
    let c = e.counters();
    Outcome {
        digest: e.trace_digest(),
        sent: c.sent,
        delivered: c.delivered,
        dropped: c.dropped,
        pending: e.pending(),
        causal,
    }
}

proptest! {
    #[test]
    fn same_plan_same_trace(p in plan(), seed in any::<u64>()) {
        prop_assert_eq!(run(&p, seed).digest, run(&p, seed).digest);
    }

    #[test]
    fn handlers_never_see_the_clock_go_back(p in plan()) {
        prop_assert!(run(&p, 1).causal);
    }

    #[test]
    fn every_message_is_delivered_or_dropped(p in plan()) {
        let o = run(&p, 2);
        prop_assert_eq!(o.pending, 0);
        prop_assert_eq!(o.sent, o.delivered + o.dropped);
    }
}
