use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::controller::{Thresholds, VnfKind};
use crate::discovery::{Certificate, TrustList};
use crate::epc::{IpPool, ServiceClass};
use crate::mobility::OffloadPolicy;
use crate::units::{parse_rate, parse_time};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{key}: {reason}")]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

/// Run-wide knobs a scenario may override with `set key=value`.
#[derive(Debug, Clone)]
pub struct Config {
    pub seed: Option<u64>,
    pub beacon_interval_us: u64,
    pub report_interval_us: u64,
    pub max_age_us: u64,
    pub mptcp_rto_us: u64,
    pub flow_tick_us: u64,
    pub pcef_window_us: u64,
    pub cdr_interval_us: Option<u64>,
    pub colocate_gateways: bool,
    pub service_us: BTreeMap<VnfKind, u64>,
    pub trust: TrustList,
    pub certificate: Certificate,
    pub ip_pool: IpPool,
    pub core_latency_us: u64,
    pub backhaul_latency_us: u64,
    pub internet_latency_us: u64,
    pub core_capacity_bps: u64,
    pub backhaul_capacity_bps: u64,
    pub radio_capacity_bps: u64,
    pub southbound_timeout_us: u64,
    pub orchestrate_interval_us: Option<u64>,
    pub thresholds: Thresholds,
    pub offload: OffloadPolicy,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: None,
            beacon_interval_us: 100_000,
            report_interval_us: 100_000,
            max_age_us: 300_000,
            mptcp_rto_us: 200_000,
            flow_tick_us: 1_000,
            pcef_window_us: 100_000,
            cdr_interval_us: None,
            colocate_gateways: false,
            service_us: [
                (VnfKind::Mme, 100),
                (VnfKind::Sgw, 5),
                (VnfKind::Pgw, 5),
                (VnfKind::Hss, 50),
                (VnfKind::Pcrf, 50),
            ]
            .into(),
            trust: TrustList::new(["operator-ca"]),
            certificate: "operator-ca:aaa.home.example".parse().expect("valid default"),
            ip_pool: "10.0.0.0/24".parse().expect("valid default"),
            core_latency_us: 500,
            backhaul_latency_us: 1_000,
            internet_latency_us: 5_000,
            core_capacity_bps: 10_000_000_000,
            backhaul_capacity_bps: 10_000_000_000,
            radio_capacity_bps: 10_000_000_000,
            southbound_timeout_us: 50_000,
            orchestrate_interval_us: None,
            thresholds: Thresholds::default(),
            offload: OffloadPolicy::default(),
        }
    }
}

/// Every key `set` accepts.
pub const CONFIG_KEYS: &[&str] = &[
    "seed",
    "beacon_interval",
    "report_interval",
    "max_age",
    "mptcp_rto",
    "flow_tick",
    "pcef_window",
    "cdr_interval",
    "colocate_gateways",
    "service.mme",
    "service.sgw",
    "service.pgw",
    "service.hss",
    "service.pcrf",
    "trust",
    "cert",
    "ip_pool",
    "core_latency",
    "backhaul_latency",
    "internet_latency",
    "core_capacity",
    "backhaul_capacity",
    "radio_capacity",
    "southbound_timeout",
    "orchestrate_interval",
    "scale_up",
    "scale_down",
    "max_instances",
    "offload",
    "lipa",
];

fn positive_time(key: &str, v: &str) -> Result<u64, ConfigError> {
    let t = parse_time(v).map_err(|e| bad(key, e))?.as_micros();
    if t == 0 {
        return Err(bad(key, "must be positive"));
    }
    Ok(t)
}

fn bad(key: &str, reason: impl ToString) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

fn boolean(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(bad(key, format!("expected a boolean, got `{v}`"))),
    }
}

impl Config {
    pub fn from_entries<'a>(
        entries: impl IntoIterator<Item = (&'a String, &'a String)>,
    ) -> Result<Self, ConfigError> {
        let mut c = Config::default();
        for (k, v) in entries {
            c.set(k, v)?;
        }
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let time = |v: &str| positive_time(key, v);
        let rate = |v: &str| -> Result<u64, ConfigError> {
            let r = parse_rate(v).map_err(|e| bad(key, e))?;
            if r == 0 {
                return Err(bad(key, "must be positive"));
            }
            Ok(r)
        };
        let fraction = |v: &str| -> Result<f64, ConfigError> {
            v.parse::<f64>()
                .ok()
                .filter(|x| (0.0..=1.0).contains(x))
                .ok_or_else(|| bad(key, "expected a number in [0, 1]"))
        };
        match key {
            "seed" => self.seed = Some(v.parse().map_err(|e| bad(key, e))?),
            "beacon_interval" => self.beacon_interval_us = time(v)?,
            "report_interval" => self.report_interval_us = time(v)?,
            "max_age" => self.max_age_us = time(v)?,
            "mptcp_rto" => self.mptcp_rto_us = time(v)?,
            "flow_tick" => self.flow_tick_us = time(v)?,
            "pcef_window" => self.pcef_window_us = time(v)?,
            "cdr_interval" => {
                self.cdr_interval_us = if v == "off" { None } else { Some(time(v)?) }
            }
            "colocate_gateways" => self.colocate_gateways = boolean(key, v)?,
            "trust" => self.trust = TrustList::new(v.split(',').filter(|s| !s.is_empty())),
            "cert" => self.certificate = v.parse().map_err(|e| bad(key, e))?,
            "ip_pool" => self.ip_pool = v.parse().map_err(|e| bad(key, e))?,
            "core_latency" => self.core_latency_us = parse_time(v).map_err(|e| bad(key, e))?.as_micros(),
            "backhaul_latency" => {
                self.backhaul_latency_us = parse_time(v).map_err(|e| bad(key, e))?.as_micros()
            }
            "internet_latency" => {
                self.internet_latency_us = parse_time(v).map_err(|e| bad(key, e))?.as_micros()
            }
            "core_capacity" => self.core_capacity_bps = rate(v)?,
            "backhaul_capacity" => self.backhaul_capacity_bps = rate(v)?,
            "radio_capacity" => self.radio_capacity_bps = rate(v)?,
            "southbound_timeout" => self.southbound_timeout_us = time(v)?,
            "orchestrate_interval" => {
                self.orchestrate_interval_us = if v == "off" { None } else { Some(time(v)?) }
            }
            "scale_up" | "scale_down" | "max_instances" => {
                let mut th = self.thresholds;
                match key {
                    "scale_up" => th.scale_up = fraction(v)?,
                    "scale_down" => th.scale_down = fraction(v)?,
                    _ => th.max_instances = v.parse().map_err(|e| bad(key, e))?,
                }
                // Ordering is checked once all keys are in; see `validate`.
                self.thresholds = th;
            }
            "offload" => {
                self.offload.classes = v
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<ServiceClass>().expect("infallible"))
                    .collect::<BTreeSet<_>>()
            }
            "lipa" => self.offload.local_destinations = boolean(key, v)?,
            k if k.starts_with("service.") => {
                let kind: VnfKind = k["service.".len()..].parse().map_err(|e| bad(key, e))?;
                self.service_us
                    .insert(kind, parse_time(v).map_err(|e| bad(key, e))?.as_micros());
            }
            _ => return Err(bad(key, "unknown setting")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let th = self.thresholds;
        Thresholds::new(th.scale_up, th.scale_down, th.max_instances)
            .map(|_| ())
            .map_err(|e| bad("scale_up", e))
    }

    pub fn service_us(&self, kind: VnfKind) -> u64 {
        self.service_us.get(&kind).copied().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_key_is_accepted() {
        let samples: BTreeMap<&str, &str> = [
            ("seed", "7"),
            ("colocate_gateways", "true"),
            ("trust", "a,b"),
            ("cert", "a:b"),
            ("ip_pool", "10.1.0.0/16"),
            ("core_capacity", "1Gbps"),
            ("backhaul_capacity", "1Gbps"),
            ("radio_capacity", "1Gbps"),
            ("scale_up", "0.9"),
            ("scale_down", "0.1"),
            ("max_instances", "4"),
            ("offload", "video,data"),
            ("lipa", "false"),
            ("cdr_interval", "off"),
            ("orchestrate_interval", "1s"),
        ]
        .into();
        for key in CONFIG_KEYS {
            let v = samples.get(key).copied().unwrap_or("10ms");
            Config::default().set(key, v).unwrap_or_else(|e| panic!("{e}"));
        }
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(Config::default().set("frobnicate", "1").is_err());
        assert!(Config::default().set("max_age", "0").is_err());
        assert!(Config::default().set("lipa", "maybe").is_err());
        let mut c = Config::default();
        c.set("scale_up", "0.1").unwrap();
        c.set("scale_down", "0.5").unwrap();
        assert!(c.validate().is_err());
    }
}
