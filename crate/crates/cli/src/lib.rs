//! Library side of the `comn` binary: running scenario files and the
//! capacity calculator tables.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use comn_core::capacity::{
    compare_cran_soda, cpri_fronthaul_rate, omnify_projection, per_user_traffic, FronthaulParams,
    TrafficProjection,
};
use comn_core::engine::SimTime;
use comn_core::epc::CdrLog;
use comn_core::report::{export_report, Format};
use comn_core::scenario::parse_scenario;
use comn_core::units::{format_bytes, format_rate};
use comn_core::world::{RunSummary, World};

/// How one scenario file should be run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub until: Option<SimTime>,
    /// Report directory; nothing is written when `None`.
    pub out: Option<PathBuf>,
    pub format: Format,
    /// Keep and return every trace line.
    pub verbose: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: None,
            until: None,
            out: None,
            format: Format::Csv,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub cdrs: CdrLog,
    pub trace: Vec<String>,
    pub written: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.summary.ok() {
            0
        } else {
            1
        }
    }
}

/// Parses and runs scenario text.
pub fn run_text(text: &str, opts: &RunOptions) -> Result<RunOutcome> {
    let scenario = parse_scenario(text)?;
    let mut world = World::new(&scenario, opts.seed)?;
    if let Some(until) = opts.until {
        world.set_end_time(until);
    }
    world.keep_trace(opts.verbose);
    let summary = world.run();
    let written = match &opts.out {
        Some(dir) => export_report(&summary, world.cdrs(), dir, opts.format)?,
        None => Vec::new(),
    };
    Ok(RunOutcome {
        trace: world.trace_lines().to_vec(),
        cdrs: world.cdrs().clone(),
        summary,
        written,
    })
}

pub fn run_file(path: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    run_text(&text, opts).with_context(|| format!("{}", path.display()))
}

/// Runs every file on its own thread. With more than one file each report
/// goes to a subdirectory of `opts.out` named after the file stem.
pub fn run_files(paths: &[PathBuf], opts: &RunOptions) -> Vec<Result<RunOutcome>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = paths
            .iter()
            .map(|p| {
                let mut o = opts.clone();
                if paths.len() > 1 {
                    let stem = p.file_stem().map_or_else(|| "run".into(), |s| s.to_os_string());
                    o.out = o.out.map(|d| d.join(stem));
                }
                s.spawn(move || run_file(p, &o))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    })
}

/// One line per flow plus totals, for the terminal.
pub fn describe(summary: &RunSummary) -> String {
    let mut out = format!(
        "clock {}  events {}  digest {}\n",
        comn_core::units::format_time(SimTime::from_micros(summary.clock_us)),
        summary.counters.fired,
        summary.trace_digest
    );
    for f in &summary.flows {
        out.push_str(&format!(
            "flow {:<10} {:<6} {:<12} {:<9} sent {:>12} delivered {:>12} dup {}\n",
            f.name, f.class, f.route, f.state, f.sent_bytes, f.delivered_bytes, f.duplicate_bytes
        ));
    }
    let e = &summary.events;
    out.push_str(&format!(
        "auth {} ok / {} failed  handovers {} done / {} rejected  cdr {} records, {} bytes\n",
        e.auth_succeeded,
        e.auth_failed,
        e.handover_completed,
        e.handover_rejected,
        summary.cdr.records,
        summary.cdr.bytes_up + summary.cdr.bytes_down
    ));
    for err in &summary.errors {
        out.push_str(&format!("error: {err}\n"));
    }
    out
}

/// Label/value rows printed as an aligned table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table(pub Vec<(String, String)>);

impl Table {
    fn row(&mut self, label: &str, value: impl ToString) {
        self.0.push((label.to_string(), value.to_string()));
    }

    pub fn get(&self, label: &str) -> Option<&str> {
        self.0.iter().find(|(l, _)| l == label).map(|(_, v)| v.as_str())
    }
}

impl std::fmt::Display for Table {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let width = self.0.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
        for (l, v) in &self.0 {
            writeln!(f, "{l:<width$}  {v}")?;
        }
        Ok(())
    }
}

fn format_hz(hz: u64) -> String {
    let (div, unit) = [(1_000_000_000, "GHz"), (1_000_000, "MHz"), (1_000, "kHz")]
        .into_iter()
        .find(|&(d, _)| hz >= d)
        .unwrap_or((1, "Hz"));
    format!("{} {unit}", hz as f64 / div as f64)
}

fn params_rows(t: &mut Table, p: &FronthaulParams) {
    t.row("bandwidth", format_hz(p.bandwidth_hz));
    t.row("antennas", p.antennas);
    t.row("sample width", format!("{} bits", p.sample_width_bits));
    t.row("oversampling", p.oversampling);
    t.row("control words", p.control_word_factor);
    t.row("line coding", p.line_coding_factor);
    t.row("compression", p.compression);
}

pub fn cpri_table(p: &FronthaulParams) -> Result<Table> {
    let rate = cpri_fronthaul_rate(p)?;
    let mut t = Table::default();
    params_rows(&mut t, p);
    t.row("fronthaul", rate);
    Ok(t)
}

/// Fronthaul of `p` relative to `base`.
pub fn scale_table(p: &FronthaulParams, base: &FronthaulParams) -> Result<Table> {
    let rate = cpri_fronthaul_rate(p)?;
    let base_rate = cpri_fronthaul_rate(base)?;
    let ratio = rate.ratio_to(&base_rate);
    let mut t = Table::default();
    t.row("base bandwidth", format_hz(base.bandwidth_hz));
    t.row("base antennas", base.antennas);
    t.row("base fronthaul", base_rate);
    t.row("bandwidth", format_hz(p.bandwidth_hz));
    t.row("antennas", p.antennas);
    t.row("fronthaul", rate);
    t.row("ratio", ratio);
    Ok(t)
}

pub fn backhaul_table(p: &FronthaulParams, info_bps: f64, overhead: f64) -> Result<Table> {
    let c = compare_cran_soda(p, info_bps, overhead)?;
    let mut t = Table::default();
    params_rows(&mut t, p);
    t.row("information rate", format_rate(info_bps));
    t.row("control overhead", overhead);
    t.row("fronthaul", format_rate(c.fronthaul_bps));
    t.row("backhaul", format_rate(c.backhaul_bps));
    t.row("fronthaul/backhaul", format!("{:.4}", c.ratio));
    Ok(t)
}

pub fn omnify_table(base: f64, from: i32, to: i32, users: Option<u64>) -> Result<Table> {
    let projected = omnify_projection(&TrafficProjection::new(from, base, to)?);
    let mut t = Table::default();
    t.row("base", format!("{}/month in {from}", format_bytes(base)));
    t.row("projected", format!("{}/month in {to}", format_bytes(projected)));
    if let Some(u) = users {
        t.row("users", u);
        t.row("per user", format!("{}/month", format_bytes(per_user_traffic(projected, u)?)));
    }
    Ok(t)
}
