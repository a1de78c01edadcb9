//! The ten acceptance criteria. Each prints one PASS/FAIL line; the binary
//! exits nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::process::Command;
use std::time::Instant;

use comn_cli::{run_text, RunOptions};
use comn_core::capacity::{
    compare_cran_soda, cpri_fronthaul_rate, omnify_projection, per_user_traffic, FronthaulParams,
    TrafficProjection,
};
use comn_core::controller::{
    collect_view, greedy_local_assign, rrm_assign, GlobalView, RrmDemand, WapReport,
};
use comn_core::discovery::{
    anqp_query, eap_ttls_authenticate, select_network, AccessType, AnqpDataSet, AnqpElement,
    AnqpQuery, AnqpResponse, AnqpValue, Certificate, CredentialMatch, EapMethod, NetworkCandidate,
    SelectionPolicy, TrustList, TtlsPeer, TtlsServer, Wap,
};
use comn_core::engine::{NodeId, SimTime};
use comn_core::epc::{Breakout, Hss, Imsi, PasswordCredential, SubscriberProfile};
use comn_core::ids::WapId;
use comn_core::report::Format;
use comn_core::scenario::parse_scenario;
use comn_core::mobility::Route;
use comn_core::world::{Audit, World};
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

/// Runs `f` over `items` on every available core, keeping order.
fn par_map<T: Send, R: Send>(items: Vec<T>, f: impl Fn(T) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get());
    let chunk = items.len().div_ceil(threads).max(1);
    let mut items = items;
    let mut parts = Vec::new();
    while !items.is_empty() {
        let rest = items.split_off(chunk.min(items.len()));
        parts.push(std::mem::replace(&mut items, rest));
    }
    std::thread::scope(|s| {
        let f = &f;
        let handles: Vec<_> = parts
            .into_iter()
            .map(|p| s.spawn(move || p.into_iter().map(f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

fn run_world(text: &str, seed: u64, trace: bool) -> World {
    let scenario = parse_scenario(text).unwrap_or_else(|e| panic!("{e}\n{text}"));
    let mut world = World::new(&scenario, Some(seed)).expect("valid settings");
    world.keep_trace(trace);
    world.run();
    world
}

fn imsi(i: usize) -> String {
    format!("00101{i:010}")
}

const KEY: &str = "00112233445566778899aabbccddeeff";

// 1 ----------------------------------------------------------------------

fn fronthaul_figure() -> Verdict {
    let out = Command::new(env!("CARGO_BIN_EXE_comn"))
        .args(["capacity", "cpri", "--bw", "20MHz", "--antennas", "2"])
        .output()
        .map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&out.stdout);
    if !out.status.success() {
        return Err(format!("exit {:?}", out.status.code()));
    }
    let line = stdout
        .lines()
        .find(|l| l.starts_with("fronthaul"))
        .ok_or("no fronthaul row")?;
    if !line.trim_end().ends_with("2.4576 Gb/s") {
        return Err(format!("printed `{line}`"));
    }
    // Independent evaluation: 30.72 Msps x 2 (I/Q) x 15 bit x 2 antennas
    // x 16/15 x 10/8.
    let expect = Ratio::new(30_720_000u128, 1) * 2 * 15 * 2 * Ratio::new(16, 15) * Ratio::new(10, 8);
    let rate = cpri_fronthaul_rate(&FronthaulParams::lte(20_000_000, 2)).map_err(|e| e.to_string())?;
    if rate.0 != expect {
        return Err(format!("rate {} != {}", rate.0, expect));
    }
    let gbps = rate.gbps();
    if !(2.3..=2.6).contains(&gbps) {
        return Err(format!("{gbps} Gb/s outside [2.3, 2.6]"));
    }
    Ok(format!("printed 2.4576 Gb/s, exact {expect} b/s, inside [2.3, 2.6] Gb/s"))
}

// 2 ----------------------------------------------------------------------

fn fronthaul_blowup() -> Verdict {
    let lte = cpri_fronthaul_rate(&FronthaulParams::lte(20_000_000, 2)).map_err(|e| e.to_string())?;
    let nr = cpri_fronthaul_rate(&FronthaulParams::lte(1_000_000_000, 64)).map_err(|e| e.to_string())?;
    let ratio = nr.ratio_to(&lte);
    // (1 GHz / 20 MHz) x (64 / 2) = 50 x 32.
    if ratio != Ratio::from_integer(1600) {
        return Err(format!("ratio {ratio}, expected 1600"));
    }
    if ratio < Ratio::from_integer(100) {
        return Err(format!("ratio {ratio} < 100"));
    }
    Ok(format!("1 GHz x 64 antennas = {nr}; ratio to 20 MHz 2x2 = {ratio} >= 100"))
}

// 3 ----------------------------------------------------------------------

fn backhaul_vs_fronthaul() -> Verdict {
    let p = FronthaulParams::lte(20_000_000, 2);
    let mut worst = f64::INFINITY;
    for overhead in [0.0, 0.02, 0.1, 0.5] {
        let c = compare_cran_soda(&p, 150e6, overhead).map_err(|e| e.to_string())?;
        let expect = 2_457_600_000.0 / (150e6 * (1.0 + overhead));
        if (c.ratio - expect).abs() > 1e-9 * expect {
            return Err(format!("overhead {overhead}: ratio {} != {expect}", c.ratio));
        }
        worst = worst.min(c.ratio);
    }
    if worst < 10.0 {
        return Err(format!("fronthaul/backhaul {worst:.3} < 10"));
    }
    Ok(format!("fronthaul/backhaul >= {worst:.3} at 150 Mb/s for overheads 0..50%"))
}

// 4 ----------------------------------------------------------------------

fn omnify_figures() -> Verdict {
    const EB: f64 = 1e18;
    let project = |to| {
        TrafficProjection::new(2013, EB, to)
            .map(|p| omnify_projection(&p))
            .map_err(|e| e.to_string())
    };
    let y2018 = project(2018)?;
    let y2028 = project(2028)?;
    let per_user = per_user_traffic(y2028, 5_000_000_000).map_err(|e| e.to_string())?;
    let checks = [
        ("2013->2018", y2018, 1e19),
        ("2013->2028", y2028, 1e21),
        ("1 ZB / 5e9 users", per_user, 2e11),
    ];
    for (what, got, want) in checks {
        if got != want {
            return Err(format!("{what}: {got:e} != {want:e}"));
        }
    }
    Ok("10 EB, 1 ZB and 200 GB, all exact".into())
}

// 5 ----------------------------------------------------------------------

struct RrmInstance {
    caps: Vec<(u64, u64)>,
    ues: Vec<RrmDemand>,
}

fn rrm_instance(rng: &mut ChaCha8Rng) -> RrmInstance {
    let m = rng.random_range(1..=4usize);
    let n = rng.random_range(0..=8usize);
    let caps = (0..m)
        .map(|_| (rng.random_range(20..200u64), rng.random_range(0..40u64)))
        .collect();
    let ues = (0..n)
        .map(|i| {
            let mut reach: BTreeSet<WapId> = BTreeSet::new();
            for w in 0..m {
                if rng.random_bool(0.6) {
                    reach.insert(WapId(w as u32 + 1));
                }
            }
            if reach.is_empty() {
                reach.insert(WapId(rng.random_range(1..=m as u32)));
            }
            RrmDemand {
                ue: NodeId(500 - i as u32),
                demand_bps: rng.random_range(1..70),
                reachable: reach,
            }
        })
        .collect();
    RrmInstance { caps, ues }
}

fn rrm_view(caps: &[(u64, u64)]) -> GlobalView {
    let reports: Vec<WapReport> = caps
        .iter()
        .enumerate()
        .map(|(i, &(capacity_bps, load_bps))| WapReport {
            wap: WapId(i as u32 + 1),
            access_type: AccessType::WiFi,
            load_bps,
            capacity_bps,
            attached: 0,
            ue_demands: BTreeMap::new(),
            policy_version: 0,
            generated_at: SimTime::ZERO,
        })
        .collect();
    collect_view(&reports, &[], SimTime::ZERO, 1)
}

/// Best smallest residual over every assignment that places nobody on an
/// access point without room. Background load alone may already exceed a
/// capacity; that access point then just must not receive anyone.
fn brute_force(caps: &[(u64, u64)], ues: &[RrmDemand]) -> Option<i128> {
    let base: Vec<i128> = caps.iter().map(|&(c, l)| c as i128 - l as i128).collect();
    let reach: Vec<Vec<usize>> = ues
        .iter()
        .map(|u| u.reachable.iter().map(|w| w.0 as usize - 1).collect())
        .collect();
    let mut pick = vec![0usize; ues.len()];
    let mut best: Option<i128> = None;
    loop {
        let mut residual = base.clone();
        let mut used = vec![false; base.len()];
        for (i, u) in ues.iter().enumerate() {
            residual[reach[i][pick[i]]] -= u.demand_bps as i128;
            used[reach[i][pick[i]]] = true;
        }
        if residual.iter().zip(&used).all(|(&r, &u)| !u || r >= 0) {
            let obj = residual.iter().copied().min().unwrap_or(0);
            best = Some(best.map_or(obj, |b| b.max(obj)));
        }
        // Odometer over the reachable lists.
        let mut i = 0;
        loop {
            if i == ues.len() {
                return best;
            }
            pick[i] += 1;
            if pick[i] < reach[i].len() {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
    }
}

fn rrm_oracle() -> Verdict {
    const N: usize = 1200;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let instances: Vec<RrmInstance> = (0..N).map(|_| rrm_instance(&mut rng)).collect();
    let results = par_map(instances, |inst| {
        let view = rrm_view(&inst.caps);
        let oracle = brute_force(&inst.caps, &inst.ues);
        let got = rrm_assign(&inst.ues, &view).ok().map(|a| a.objective);
        let greedy = greedy_local_assign(&inst.ues, &view).objective;
        (oracle, got, greedy)
    });
    let mut mismatches = 0;
    let mut feasible = 0;
    let mut strictly_better = 0;
    let mut below_greedy = 0;
    for (oracle, got, greedy) in &results {
        if oracle != got {
            mismatches += 1;
        }
        match got {
            Some(obj) => {
                feasible += 1;
                if obj < greedy {
                    below_greedy += 1;
                } else if obj > greedy {
                    strictly_better += 1;
                }
            }
            // No feasible assignment exists, so the baseline must overload.
            None => {
                if *greedy >= 0 {
                    below_greedy += 1;
                }
            }
        }
    }
    println!(
        "      companion: {feasible} feasible instances, max-min strictly above greedy-local on {strictly_better}, below on {below_greedy}"
    );
    if mismatches > 0 || below_greedy > 0 {
        return Err(format!(
            "{mismatches}/{N} differ from enumeration, {below_greedy} below greedy"
        ));
    }
    Ok(format!("{N}/{N} instances equal brute-force enumeration"))
}

// 6 ----------------------------------------------------------------------

fn handover_case(seed: u64) -> (String, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::new();
    let waps = rng.random_range(2..=4usize);
    for w in 0..waps {
        let cap = rng.random_range(20..=100u32);
        writeln!(s, "at 0ms add-wap w{w} type=wifi capacity={cap}Mbps").unwrap();
    }
    writeln!(s, "at 0ms add-subscriber imsi={} key={KEY}", imsi(1)).unwrap();
    writeln!(s, "at 0ms add-ue ue1 imsi={}", imsi(1)).unwrap();
    let first = rng.random_range(0..waps);
    writeln!(s, "at 1ms attach ue1 via=w{first}").unwrap();
    let size = rng.random_range(50..=400u64) * 1000;
    let rate = rng.random_range(2..=10u64);
    writeln!(s, "at 80ms start-flow f1 ue=ue1 class=data rate={rate}Mbps size={size}").unwrap();
    let duration_us = size * 8 / rate;
    let mut t = 90_000u64;
    for _ in 0..rng.random_range(1..=5) {
        t += rng.random_range(1_000..=duration_us / 3 + 2_000);
        let to = rng.random_range(0..waps);
        writeln!(s, "at {t}us handover ue1 to=w{to}").unwrap();
    }
    let end = t.max(80_000 + duration_us) + 1_500_000;
    writeln!(s, "at {end}us end").unwrap();
    (s, size)
}

fn check_handover(text: &str, size: u64, seed: u64) -> Result<u32, String> {
    let world = run_world(text, seed, false);
    let ue = world.lookup("ue1").ok_or("no ue1")?;
    let node = world.ue("ue1").ok_or("no ue1")?;
    let mut ips = BTreeSet::new();
    let mut anchors = BTreeSet::new();
    let mut completed = 0;
    for (_, a) in world.audits() {
        match a {
            Audit::Attached {
                ue: u,
                ip,
                anchor_sgw,
                ..
            } if *u == ue => {
                ips.insert(*ip);
                anchors.insert(*anchor_sgw);
            }
            Audit::BearerCreated {
                ue: u, anchor_sgw, ..
            } if *u == ue => {
                anchors.insert(*anchor_sgw);
            }
            Audit::HandoverCompleted {
                ue: u,
                ip,
                anchor_sgw,
                ..
            } if *u == ue => {
                completed += 1;
                ips.insert(*ip);
                anchors.insert(*anchor_sgw);
            }
            Audit::Error(e) => return Err(format!("error: {e}")),
            _ => {}
        }
    }
    ips.insert(node.ip.ok_or("terminal lost its address")?);
    if let Some((sgw, _)) = world.anchor(ue) {
        anchors.insert(sgw);
    }
    if ips.len() != 1 {
        return Err(format!("address changed: {ips:?}"));
    }
    if anchors.len() != 1 {
        return Err(format!("anchor changed: {anchors:?}"));
    }
    let id = world.flow_id("f1").ok_or("no flow")?;
    let flow = node.flows.get(&id).ok_or("flow missing at terminal")?;
    let r = &flow.reassembly;
    if r.delivered() != size || r.received_bytes() != size || r.duplicate_bytes() != 0 {
        return Err(format!(
            "delivered {} received {} duplicates {} of {size}",
            r.delivered(),
            r.received_bytes(),
            r.duplicate_bytes()
        ));
    }
    Ok(completed)
}

fn mobility_invariants() -> Verdict {
    const N: u64 = 520;
    let results = par_map((0..N).collect(), |seed| {
        let (text, size) = handover_case(seed);
        check_handover(&text, size, seed).map_err(|e| format!("seed {seed}: {e}"))
    });
    let failures: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    let handovers: u32 = results.iter().filter_map(|r| r.as_ref().ok()).sum();
    if let Some(first) = failures.first() {
        return Err(format!("{} of {N} runs violated: {first}", failures.len()));
    }
    Ok(format!(
        "{N} runs, {handovers} completed handovers: address and anchor fixed, every byte delivered exactly once"
    ))
}

// 7 ----------------------------------------------------------------------

fn multipath_case(seed: u64) -> (String, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lte = rng.random_range(20..=100u64);
    let wifi = rng.random_range(20..=100u64);
    let rate = rng.random_range(2..=(lte.min(wifi) * 8 / 10).min(16));
    let size = rng.random_range(100..=600u64) * 1000;
    let duration_us = size * 8 / rate;
    let fail_at = 200_000 + rng.random_range(5_000..=duration_us.max(10_000));
    let failure = match rng.random_range(0..6) {
        0 => "fail-link ue1-lte1".to_string(),
        1 => "fail-link ue1-wifi1".to_string(),
        2 => "fail-link lte1-switch".to_string(),
        3 => "fail-link wifi1-switch".to_string(),
        4 => "fail-wap lte1".to_string(),
        _ => "fail-wap wifi1".to_string(),
    };
    let end = 200_000 + duration_us * 2 + 1_500_000;
    let text = format!(
        "at 0ms add-wap lte1 type=cellular capacity={lte}Mbps
at 0ms add-wap wifi1 type=wifi capacity={wifi}Mbps
at 0ms add-subscriber imsi={imsi} key={KEY}
at 0ms add-ue ue1 imsi={imsi}
at 1ms attach ue1 via=lte1
at 60ms attach ue1 via=wifi1
at 200ms start-flow f1 ue=ue1 class=data rate={rate}Mbps multipath=lte1,wifi1 size={size}
at {fail_at}us {failure}
at {end}us end
",
        imsi = imsi(1)
    );
    (text, size)
}

/// Network-level duplicate bytes on success.
fn check_multipath(text: &str, size: u64, seed: u64) -> Result<u64, String> {
    let world = run_world(text, seed, false);
    if let Some(e) = world.errors().first() {
        return Err(format!("error: {e}"));
    }
    let node = world.ue("ue1").ok_or("no ue1")?;
    let id = world.flow_id("f1").ok_or("no flow")?;
    let flow = node.flows.get(&id).ok_or("flow missing at terminal")?;
    let server = world.server().flows.get(&id).ok_or("flow missing at server")?;
    let sent = server.conn.sent_bytes();
    // The delivered runs, in order, must tile [0, sent) with no overlap.
    let mut next = 0u64;
    for &(off, len) in flow.reassembly.deliveries() {
        if off != next {
            return Err(format!("delivery at {off}, expected {next}"));
        }
        next += u64::from(len);
    }
    if sent != size || next != size {
        return Err(format!("sent {sent}, delivered {next}, size {size}"));
    }
    Ok(flow.reassembly.duplicate_bytes())
}

fn split_case(lte: u64, wifi: u64, size: u64) -> String {
    format!(
        "at 0ms add-wap lte1 type=cellular capacity={lte}Mbps
at 0ms add-wap wifi1 type=wifi capacity={wifi}Mbps
at 0ms add-subscriber imsi={imsi} key={KEY}
at 0ms add-ue ue1 imsi={imsi}
at 1ms attach ue1 via=lte1
at 60ms attach ue1 via=wifi1
at 200ms start-flow f1 ue=ue1 class=data rate=12Mbps multipath=lte1,wifi1 size={size}
at 3s end
",
        imsi = imsi(1)
    )
}

fn multipath_resiliency() -> Verdict {
    const N: u64 = 520;
    let results = par_map((0..N).collect(), |seed| {
        let (text, size) = multipath_case(1000 + seed);
        check_multipath(&text, size, seed).map_err(|e| format!("seed {}: {e}", 1000 + seed))
    });
    let failures: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    if let Some(first) = failures.first() {
        return Err(format!("{} of {N} runs violated: {first}", failures.len()));
    }
    let dups: u64 = results.iter().filter_map(|r| r.as_ref().ok()).sum();
    let mut worst = 0f64;
    for (lte, wifi, size) in [(100, 50, 900_000), (60, 30, 1_200_000), (40, 20, 601_500)] {
        let world = run_world(&split_case(lte, wifi, size), 0, false);
        let id = world.flow_id("f1").ok_or("no flow")?;
        let node = world.ue("ue1").ok_or("no ue1")?;
        let flow = &node.flows[&id];
        let got: Vec<u64> = flow.subflows.iter().map(|(sf, _)| flow.received[sf]).collect();
        let total: u64 = got.iter().sum();
        if total != size || flow.reassembly.delivered() != size {
            return Err(format!("2:1 case {lte}/{wifi}: carried {total} of {size}"));
        }
        let share = got[0] as f64 / total as f64;
        let err = (share - 2.0 / 3.0).abs() / (2.0 / 3.0);
        worst = worst.max(err);
        if err > 0.01 {
            return Err(format!("2:1 case {lte}/{wifi}: share {share:.4}"));
        }
    }
    Ok(format!(
        "{N} failure runs delivered every byte once ({dups} resent bytes arrived twice and were discarded before delivery); 2:1 split off by at most {:.3}%",
        worst * 100.0
    ))
}

// 8 ----------------------------------------------------------------------

struct ChargingCase {
    text: String,
}

fn charging_case(seed: u64) -> ChargingCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::new();
    if rng.random_bool(0.5) {
        let every = [50, 120, 300][rng.random_range(0..3)];
        writeln!(s, "set cdr_interval={every}ms").unwrap();
    }
    let waps = rng.random_range(1..=3usize);
    let mut has_lgw = Vec::new();
    for w in 0..waps {
        let lgw = w == 0 || rng.random_bool(0.5);
        has_lgw.push(lgw);
        let ty = if rng.random_bool(0.5) { "wifi" } else { "cellular" };
        let cap = rng.random_range(30..=100u32);
        writeln!(s, "at 0ms add-wap w{w} type={ty} capacity={cap}Mbps lgw={lgw}").unwrap();
    }
    let ues = rng.random_range(1..=3usize);
    let mut t_end = 0u64;
    for u in 0..ues {
        let maxrate = if rng.random_bool(0.3) {
            format!(" maxrate={}Mbps", rng.random_range(1..=4))
        } else {
            String::new()
        };
        writeln!(s, "at 0ms add-subscriber imsi={} key={KEY}{maxrate}", imsi(u)).unwrap();
        writeln!(s, "at 0ms add-ue ue{u} imsi={}", imsi(u)).unwrap();
        let via = rng.random_range(0..waps);
        writeln!(s, "at {}ms attach ue{u} via=w{via}", 1 + u).unwrap();
        for f in 0..rng.random_range(1..=3) {
            let local = has_lgw[via] && rng.random_bool(0.5);
            let dst = if local { "local" } else { "internet" };
            let class = ["voice", "video", "data"][rng.random_range(0..3)];
            let rate = rng.random_range(1..=8u64);
            let start = rng.random_range(50..=300u64);
            let name = format!("u{u}f{f}");
            if rng.random_bool(0.5) {
                let size = rng.random_range(10..=200u64) * 1000;
                writeln!(
                    s,
                    "at {start}ms start-flow {name} ue=ue{u} class={class} rate={rate}Mbps dst={dst} size={size}"
                )
                .unwrap();
                t_end = t_end.max(start * 1000 + size * 8 / rate);
            } else {
                writeln!(s, "at {start}ms start-flow {name} ue=ue{u} class={class} rate={rate}Mbps dst={dst}").unwrap();
                let stop = start + rng.random_range(50..=400u64);
                writeln!(s, "at {stop}ms stop-flow {name}").unwrap();
                t_end = t_end.max(stop * 1000);
            }
        }
        // Moving terminals whose flows are all in the core.
        if rng.random_bool(0.3) && waps > 1 && !s.contains(&format!("ue=ue{u} class=voice rate=1Mbps dst=local")) {
            let to = (via + 1) % waps;
            if !s.lines().any(|l| l.contains(&format!("ue=ue{u} ")) && l.contains("dst=local")) {
                writeln!(s, "at {}ms handover ue{u} to=w{to}", rng.random_range(100..=400)).unwrap();
            }
        }
    }
    // Some runs end with flows still open; their records close at the end.
    let end = if rng.random_bool(0.3) {
        t_end / 2
    } else {
        t_end + 500_000
    };
    writeln!(s, "at {}us end", end.max(10_000)).unwrap();
    ChargingCase { text: s }
}

fn check_charging(text: &str, seed: u64) -> Result<(usize, usize), String> {
    let world = run_world(text, seed, false);
    if let Some(e) = world.errors().first() {
        return Err(format!("error: {e}"));
    }
    let mut core: BTreeMap<Imsi, u64> = BTreeMap::new();
    let mut local: BTreeMap<Imsi, u64> = BTreeMap::new();
    let mut by_flow: BTreeMap<String, BTreeSet<Breakout>> = BTreeMap::new();
    for r in world.cdrs().records() {
        let into = match r.breakout {
            Breakout::Core => &mut core,
            Breakout::Local => &mut local,
        };
        *into.entry(r.imsi.clone()).or_default() += r.bytes_up + r.bytes_down;
        by_flow.entry(r.flow_id.clone()).or_default().insert(r.breakout);
    }
    let strip = |m: BTreeMap<Imsi, u64>| -> BTreeMap<Imsi, u64> {
        m.into_iter().filter(|(_, b)| *b > 0).collect()
    };
    let pgw = strip(world.pgw_forwarded());
    let lgw = strip(world.lgw_forwarded());
    if strip(core.clone()) != pgw {
        return Err(format!("core records {core:?} vs PDN gateway {pgw:?}"));
    }
    if strip(local.clone()) != lgw {
        return Err(format!("local records {local:?} vs local gateways {lgw:?}"));
    }
    let (sgws, pgws) = world.gateways();
    let core_nodes: BTreeSet<NodeId> = sgws.union(&pgws).copied().collect();
    let mut sipto = 0;
    let mut local_paths = 0;
    for (name, node) in world.nodes() {
        let comn_core::world::Node::Ue(ue) = node else { continue };
        for f in ue.flows.values() {
            for (route, paths) in &f.paths {
                if !matches!(route, Route::Local { .. }) {
                    continue;
                }
                for p in paths {
                    local_paths += 1;
                    if p.iter().any(|n| core_nodes.contains(n)) {
                        return Err(format!("local path {p:?} of {name} crosses the core"));
                    }
                }
            }
            if matches!(f.route, Route::Local { .. }) {
                sipto += 1;
                let kinds = by_flow.get(&f.descriptor.name).cloned().unwrap_or_default();
                if kinds.contains(&Breakout::Core) {
                    return Err(format!("local flow {} has core records", f.descriptor.name));
                }
            }
        }
    }
    Ok((sipto, local_paths))
}

fn charging_conservation() -> Verdict {
    const N: u64 = 400;
    let results = par_map((0..N).collect(), |seed| {
        let case = charging_case(7000 + seed);
        check_charging(&case.text, seed).map_err(|e| format!("seed {}: {e}", 7000 + seed))
    });
    let failures: Vec<&String> = results.iter().filter_map(|r| r.as_ref().err()).collect();
    if let Some(first) = failures.first() {
        return Err(format!("{} of {N} scenarios violated: {first}", failures.len()));
    }
    let (sipto, paths) = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(format!(
        "{N} scenarios: core records equal PDN gateway bytes per subscriber; {sipto} breakout flows, {paths} local hop lists, none through a gateway"
    ))
}

// 9 ----------------------------------------------------------------------

fn random_dataset(rng: &mut ChaCha8Rng) -> AnqpDataSet {
    let full = AnqpDataSet::operator("op.example", &["5a03ba".into()], &["op.example".into()]);
    let mut d = AnqpDataSet::default();
    for tag in AnqpElement::ALL {
        if rng.random_bool(0.6) {
            d.insert(full.get(tag).expect("operator advertises all").clone());
        }
    }
    d
}

fn anqp_exactness(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut checked = 0;
    for i in 0..2000 {
        let mut wap = Wap::new(WapId(i), AccessType::WiFi, 10_000_000, 1);
        wap.hs20_capable = true;
        wap.advertised = random_dataset(rng);
        let requested: BTreeSet<AnqpElement> = AnqpElement::ALL
            .into_iter()
            .filter(|_| rng.random_bool(0.5))
            .collect();
        let query = AnqpQuery {
            elements: requested.clone(),
        };
        match anqp_query(&wap, &query) {
            Ok(resp) => {
                let want: BTreeSet<AnqpElement> =
                    requested.intersection(&wap.advertised.tags()).copied().collect();
                if resp.tags() != want {
                    return Err(format!("asked {requested:?}, got {:?}", resp.tags()));
                }
                for (tag, v) in &resp.elements {
                    if wap.advertised.get(*tag) != Some(v) {
                        return Err(format!("{tag:?} answered {v:?}"));
                    }
                }
                checked += 1;
            }
            Err(_) if requested.is_empty() => {}
            Err(e) => return Err(format!("asked {requested:?}: {e}")),
        }
    }
    Ok(checked)
}

fn ttls_ordering(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let id: Imsi = imsi(1).parse().expect("valid");
    for _ in 0..1000 {
        let password = PasswordCredential {
            username: "alice".into(),
            password: "right".into(),
        };
        let profile = SubscriberProfile::new(id.clone(), None, Some(password.clone()))
            .expect("has a credential");
        let mut hss = Hss::new(ChaCha8Rng::seed_from_u64(rng.random()));
        hss.register(profile).map_err(|e| e.to_string())?;
        let vector = hss.auth_vector(&id).map_err(|e| e.to_string())?;
        let issuer = ["operator-ca", "rogue-ca"][rng.random_range(0..2)];
        let valid = if rng.random_bool(0.8) { "" } else { ":invalid" };
        let cert: Certificate = format!("{issuer}:aaa.home.example{valid}")
            .parse()
            .map_err(|e| format!("{e:?}"))?;
        let peer_cred = match rng.random_range(0..3) {
            0 => None,
            1 => Some(PasswordCredential {
                password: "wrong".into(),
                ..password.clone()
            }),
            _ => Some(password.clone()),
        };
        let mut peer = TtlsPeer::new(TrustList::new(["operator-ca"]), peer_cred);
        let mut server = TtlsServer::new(cert, &vector).map_err(|e| e.to_string())?;
        let (_, transcript) = eap_ttls_authenticate(&mut peer, &mut server);
        let tunnel = transcript
            .iter()
            .position(|m| matches!(m, comn_core::discovery::EapMessage::TtlsTunnelEstablished));
        if let Some(cred) = transcript.iter().position(|m| m.carries_password()) {
            if tunnel.is_none_or(|t| t > cred) {
                return Err(format!("credential before tunnel: {transcript:?}"));
            }
        }
    }
    // The same ordering in whole-network traces, including rejected
    // certificates.
    let mut runs = 0;
    for seed in 0..60u64 {
        let cert = if seed % 3 == 0 {
            "set cert=rogue-ca:aaa.home.example\n"
        } else {
            ""
        };
        let text = format!(
            "{cert}at 0ms add-wap hot type=wifi capacity=50Mbps hs20=true eap=ttls
at 0ms add-subscriber imsi={i} password=alice:pw
at 0ms add-ue ue1 imsi={i}
at {t}ms attach ue1 via=auto
at 1s end
",
            i = imsi(1),
            t = 120 + seed
        );
        let world = run_world(&text, seed, true);
        let lines = world.trace_lines();
        let tunnel = lines.iter().position(|l| l.contains("TtlsTunnelEstablished"));
        let cred = lines.iter().position(|l| l.contains("TtlsInnerCredentials"));
        if let Some(c) = cred {
            if tunnel.is_none_or(|t| t > c) {
                return Err(format!("seed {seed}: credential before tunnel in trace"));
            }
        }
        if lines.iter().any(|l| l.contains("password=pw")) {
            return Err("a password reached the trace".into());
        }
        runs += 1;
    }
    Ok(runs)
}

fn selection_determinism(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let imsi: Imsi = imsi(1).parse().expect("valid");
    let mut changed = 0;
    for _ in 0..1000 {
        let mut profile =
            SubscriberProfile::new(imsi.clone(), Some(vec![1; 16]), None).expect("has a key");
        if rng.random_bool(0.5) {
            profile.roaming_consortia.insert("5a03ba".into());
        }
        let n = rng.random_range(1..=6);
        let mut cands: Vec<NetworkCandidate> = (0..n)
            .map(|i| {
                let domain = ["home.example", "other.example"][rng.random_range(0..2)];
                let realm = ["home.example", "x.example"][rng.random_range(0..2)];
                let mut elements = BTreeMap::new();
                elements.insert(AnqpElement::DomainName, AnqpValue::DomainName(vec![domain.into()]));
                elements.insert(
                    AnqpElement::NaiRealmList,
                    AnqpValue::NaiRealmList(vec![realm.into()]),
                );
                if rng.random_bool(0.5) {
                    elements.insert(
                        AnqpElement::RoamingConsortium,
                        AnqpValue::RoamingConsortium(vec!["5a03ba".into()]),
                    );
                }
                if rng.random_bool(0.3) {
                    elements.insert(
                        AnqpElement::EapMethods,
                        AnqpValue::EapMethods(vec![EapMethod::Ttls]),
                    );
                }
                let anqp = AnqpResponse { elements };
                let credential_match = comn_core::discovery::credential_match(&profile, &anqp);
                NetworkCandidate {
                    wap: WapId(i),
                    access_type: AccessType::WiFi,
                    anqp,
                    credential_match,
                    // Coarse values so ties are common.
                    link_quality: f64::from(rng.random_range(1..=3u8)) / 3.0,
                    load: f64::from(rng.random_range(0..=2u8)) / 2.0,
                }
            })
            .collect();
        let policy = SelectionPolicy {
            min_match: [CredentialMatch::NaiRealm, CredentialMatch::RoamingConsortium]
                [rng.random_range(0..2)],
            access_types: BTreeSet::new(),
        };
        let first = select_network(&cands, &profile, &policy);
        for _ in 0..8 {
            cands.shuffle(rng);
            let again = select_network(&cands, &profile, &policy);
            if again != first {
                changed += 1;
            }
        }
    }
    if changed > 0 {
        return Err(format!("{changed} permutations changed the choice"));
    }
    Ok(8000)
}

fn pre_association() -> Result<usize, String> {
    // The terminal queries both hotspots, matches neither, and must come
    // away with no attachment anywhere.
    let text = format!(
        "at 0ms add-wap a type=wifi capacity=50Mbps hs20=true domain=a.example realm=a.example
at 0ms add-wap b type=wifi capacity=50Mbps hs20=true domain=b.example realm=b.example
at 0ms add-subscriber imsi={i} key={KEY}
at 0ms add-ue ue1 imsi={i}
at 150ms attach ue1 via=auto
at 1s end
",
        i = imsi(1)
    );
    let world = run_world(&text, 0, false);
    let exchanges = world
        .audits()
        .iter()
        .filter(|(_, a)| matches!(a, Audit::AnqpExchange { .. }))
        .count();
    if exchanges != 2 {
        return Err(format!("{exchanges} ANQP exchanges, expected 2"));
    }
    let ue = world.lookup("ue1").ok_or("no ue1")?;
    let attached = ["a", "b"]
        .iter()
        .any(|w| world.wap(w).is_some_and(|n| n.attached().next().is_some()));
    if attached || world.context(ue).is_some_and(|c| c.ip.is_some()) {
        return Err("ANQP created attachment state".into());
    }
    Ok(exchanges)
}

fn discovery_auth() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let anqp = anqp_exactness(&mut rng).map_err(|e| format!("ANQP: {e}"))?;
    let ttls = ttls_ordering(&mut rng).map_err(|e| format!("TTLS: {e}"))?;
    let sel = selection_determinism(&mut rng).map_err(|e| format!("selection: {e}"))?;
    pre_association().map_err(|e| format!("pre-association: {e}"))?;
    Ok(format!(
        "{anqp} ANQP queries exact; 1000 TTLS exchanges + {ttls} traces tunnel-first; {sel} permutations kept the choice; ANQP left no attachment"
    ))
}

// 10 ---------------------------------------------------------------------

fn corpus() -> Vec<(String, String)> {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios");
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .expect("scenario corpus")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "scn"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read_to_string(&p).expect("readable"))
        })
        .collect()
}

fn determinism() -> Verdict {
    let files = corpus();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut checked = 0;
    for (name, text) in &files {
        for format in [Format::Csv, Format::Json] {
            let mut outputs = Vec::new();
            for round in 0..2 {
                let dir = tmp.path().join(format!("{name}-{format:?}-{round}"));
                let opts = RunOptions {
                    seed: Some(42),
                    out: Some(dir.clone()),
                    format,
                    ..RunOptions::default()
                };
                let outcome = run_text(text, &opts).map_err(|e| format!("{name}: {e:#}"))?;
                let mut files = Vec::new();
                for path in &outcome.written {
                    files.push(std::fs::read(path).map_err(|e| e.to_string())?);
                }
                outputs.push((outcome.summary.trace_digest.clone(), files));
            }
            if outputs[0] != outputs[1] {
                return Err(format!("{name} ({format:?}) differs between runs"));
            }
            checked += 1;
        }
    }
    Ok(format!(
        "{} corpus scenarios x 2 formats: report, CDR log and trace digest byte-identical",
        checked / 2
    ))
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    if let Ok(seed) = std::env::var("DUMP_MULTIPATH") {
        print!("{}", multipath_case(seed.parse().unwrap()).0);
        return;
    }
    let criteria: [Criterion; 10] = [
        ("fronthaul figure", fronthaul_figure),
        ("5G fronthaul blow-up", fronthaul_blowup),
        ("backhaul vs fronthaul", backhaul_vs_fronthaul),
        ("traffic projection", omnify_figures),
        ("RRM oracle", rrm_oracle),
        ("mobility invariants", mobility_invariants),
        ("multipath resiliency", multipath_resiliency),
        ("charging conservation", charging_conservation),
        ("discovery and auth", discovery_auth),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = check();
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1}s): {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
