//! Writing a finished run to disk: the metrics report as CSV or JSON and
//! the CDR log.
//!
//! Every value comes from the virtual clock or from counters, so files are
//! byte-identical for the same scenario and seed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::epc::CdrLog;
use crate::world::RunSummary;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown report format `{0}` (expected csv or json)")]
    UnknownFormat(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

pub const CSV_HEADER: &str = "group,entity,metric,value";

/// Long-form CSV: one row per metric, grouped by what it describes.
pub fn report_csv(s: &RunSummary) -> String {
    let mut out = String::new();
    let mut row = |group: &str, entity: &str, metric: &str, value: &dyn std::fmt::Display| {
        writeln!(out, "{group},{entity},{metric},{value}").expect("writing to a String");
    };
    row("run", "", "seed", &s.seed);
    row("run", "", "end_us", &s.end_us);
    row("run", "", "clock_us", &s.clock_us);
    row("run", "", "trace_digest", &s.trace_digest);
    row("run", "", "trace_lines", &s.trace_lines);
    row("run", "", "events_fired", &s.counters.fired);
    row("run", "", "messages_sent", &s.counters.sent);
    row("run", "", "messages_delivered", &s.counters.delivered);
    row("run", "", "messages_dropped", &s.counters.dropped);
    row("run", "", "errors", &s.errors.len());
    for f in &s.flows {
        let n = f.name.as_str();
        row("flow", n, "ue", &f.ue);
        row("flow", n, "class", &f.class);
        row("flow", n, "route", &f.route);
        row("flow", n, "interface", &f.interface);
        row("flow", n, "multipath", &f.multipath);
        row("flow", n, "state", &f.state);
        row("flow", n, "sent_bytes", &f.sent_bytes);
        row("flow", n, "delivered_bytes", &f.delivered_bytes);
        row("flow", n, "duplicate_bytes", &f.duplicate_bytes);
        for sf in &f.subflows {
            let e = format!("{n}.{}", sf.subflow);
            row("subflow", &e, "interface", &sf.interface);
            row("subflow", &e, "carried_bytes", &sf.carried_bytes);
            row("subflow", &e, "received_bytes", &sf.received_bytes);
        }
    }
    for w in &s.waps {
        let n = w.name.as_str();
        row("wap", n, "access", &w.access);
        row("wap", n, "capacity_bps", &w.capacity_bps);
        row("wap", n, "peak_load_bps", &w.peak_load_bps);
        row("wap", n, "sent_bits", &w.sent_bits);
        row("wap", n, "forwarded_packets", &w.forwarded_packets);
        row("wap", n, "attached", &w.attached);
        row("wap", n, "policy_version", &w.policy_version);
    }
    let e = &s.events;
    for (metric, v) in [
        ("auth_succeeded", e.auth_succeeded),
        ("auth_failed", e.auth_failed),
        ("attached", e.attached),
        ("attach_rejected", e.attach_rejected),
        ("handover_started", e.handover_started),
        ("handover_completed", e.handover_completed),
        ("handover_rejected", e.handover_rejected),
        ("path_failures", e.path_failures),
        ("southbound_acked", e.southbound_acked),
        ("southbound_failed", e.southbound_failed),
        ("scale_actions", e.scale_actions),
    ] {
        row("events", "", metric, &v);
    }
    let c = &s.cdr;
    for (metric, v) in [
        ("records", c.records),
        ("bytes_up", c.bytes_up),
        ("bytes_down", c.bytes_down),
        ("core_bytes", c.core_bytes),
        ("local_bytes", c.local_bytes),
    ] {
        row("cdr", "", metric, &v);
    }
    format!("{CSV_HEADER}\n{out}")
}

pub fn report_json(s: &RunSummary) -> String {
    let mut text = serde_json::to_string_pretty(s).expect("summary serialises");
    text.push('\n');
    text
}

/// Writes `report.<ext>` and `cdr.csv` under `dir`, creating it if needed,
/// and returns the paths written.
pub fn export_report(
    summary: &RunSummary,
    cdrs: &CdrLog,
    dir: &Path,
    format: Format,
) -> Result<Vec<PathBuf>, ReportError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let report = dir.join(format!("report.{}", format.extension()));
    let body = match format {
        Format::Csv => report_csv(summary),
        Format::Json => report_json(summary),
    };
    std::fs::write(&report, body).map_err(io(&report))?;
    let cdr = dir.join("cdr.csv");
    std::fs::write(&cdr, cdrs.to_csv()).map_err(io(&cdr))?;
    Ok(vec![report, cdr])
}
