//! Workloads shared by the benchmarks.

use std::collections::{BTreeMap, BTreeSet};

use comn_core::controller::{collect_view, GlobalView, RrmDemand, WapReport};
use comn_core::discovery::AccessType;
use comn_core::engine::{NodeId, SimTime};
use comn_core::ids::WapId;

const KEY: &str = "00112233445566778899aabbccddeeff";

/// `ues` terminals attaching to one cellular access point 1 ms apart.
pub fn attach_storm(ues: u32) -> String {
    let mut s = String::from("at 0ms add-wap lte1 type=cellular capacity=1Gbps\n");
    for n in 1..=ues {
        s += &format!(
            "at 0ms add-subscriber imsi=00101{n:010} key={KEY}\nat 0ms add-ue ue{n} imsi=00101{n:010}\nat {n}ms attach ue{n} via=lte1\n"
        );
    }
    s += &format!("at {}ms end\n", ues + 500);
    s
}

/// One terminal moving `bytes` over an LTE and a Wi-Fi subflow, losing the
/// Wi-Fi radio link halfway.
pub fn multipath_transfer(bytes: u64) -> String {
    let secs = bytes * 8 / 12_000_000 + 2;
    format!(
        "at 0ms add-wap lte1 type=cellular capacity=100Mbps
at 0ms add-wap wifi1 type=wifi capacity=50Mbps
at 0ms add-subscriber imsi=001010000000001 key={KEY}
at 0ms add-ue ue1 imsi=001010000000001
at 1ms attach ue1 via=lte1
at 60ms attach ue1 via=wifi1
at 200ms start-flow f1 ue=ue1 class=data rate=12Mbps multipath=lte1,wifi1 size={bytes}
at {half}ms fail-link ue1-wifi1
at {secs}s end
",
        half = 200 + bytes * 8 / 24_000,
    )
}

/// A dense RRM instance: every terminal reaches every access point and
/// demands differ enough that many assignments are feasible.
pub fn rrm_instance(ues: u32, waps: u32) -> (Vec<RrmDemand>, GlobalView) {
    let reach: BTreeSet<WapId> = (1..=waps).map(WapId).collect();
    let demands = (0..ues)
        .map(|i| RrmDemand {
            ue: NodeId(100 + i),
            demand_bps: 1_000_000 * u64::from(1 + (i * 7) % 11),
            reachable: reach.clone(),
        })
        .collect();
    let reports: Vec<WapReport> = (1..=waps)
        .map(|w| WapReport {
            wap: WapId(w),
            access_type: AccessType::WiFi,
            load_bps: 2_000_000 * u64::from(w),
            capacity_bps: 60_000_000,
            attached: 0,
            ue_demands: BTreeMap::new(),
            policy_version: 0,
            generated_at: SimTime::ZERO,
        })
        .collect();
    (demands, collect_view(&reports, &[], SimTime::ZERO, 1))
}
