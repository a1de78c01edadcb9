use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use comn_cli::{
    backhaul_table, cpri_table, describe, omnify_table, run_files, scale_table, RunOptions,
};
use comn_core::capacity::FronthaulParams;
use comn_core::engine::SimTime;
use comn_core::report::Format;
use comn_core::units::{parse_bytes, parse_frequency, parse_rate, parse_time};
use num_rational::Ratio;

/// Deterministic simulator of a coreless mobile network.
#[derive(Parser, Debug)]
#[command(name = "comn", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Scenario file; repeat to run several in parallel.
    #[arg(long, value_name = "PATH")]
    scenario: Vec<PathBuf>,
    /// Seed for every random stream (default: the scenario's, else 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Stop the clock here instead of at the scenario's end.
    #[arg(long, value_parser = time)]
    until: Option<SimTime>,
    /// Directory for the report and CDR log.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = format)]
    format: Format,
    /// Print every trace line.
    #[arg(long)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fronthaul and backhaul calculators.
    #[command(subcommand)]
    Capacity(Capacity),
}

#[derive(Args, Debug, Clone)]
struct Channel {
    /// Channel bandwidth, e.g. 20MHz.
    #[arg(long, value_parser = parse_frequency)]
    bw: u64,
    #[arg(long)]
    antennas: u32,
    /// Bits per I or Q sample.
    #[arg(long, default_value_t = 15)]
    sample_width: u32,
    /// Baseband compression factor applied to the rate, e.g. 1/3.
    #[arg(long, default_value = "1", value_parser = ratio)]
    compression: Ratio<u64>,
}

impl Channel {
    fn params(&self) -> FronthaulParams {
        FronthaulParams {
            sample_width_bits: self.sample_width,
            compression: self.compression,
            ..FronthaulParams::lte(self.bw, self.antennas)
        }
    }
}

#[derive(Subcommand, Debug)]
enum Capacity {
    /// CPRI fronthaul rate of one channel.
    Cpri(Channel),
    /// Fronthaul of a channel relative to a base channel.
    Scale {
        #[command(flatten)]
        channel: Channel,
        #[arg(long, default_value = "20MHz", value_parser = parse_frequency)]
        base_bw: u64,
        #[arg(long, default_value_t = 2)]
        base_antennas: u32,
    },
    /// Packet backhaul next to fronthaul for the same channel.
    Backhaul {
        #[command(flatten)]
        channel: Channel,
        /// Information rate carried, e.g. 150Mbps.
        #[arg(long, value_parser = parse_rate)]
        info_rate: u64,
        /// Controller signalling as a fraction of the information rate.
        #[arg(long, default_value_t = 0.0)]
        overhead: f64,
    },
    /// Ten-fold-per-five-years traffic projection.
    Omnify {
        /// Monthly traffic in the base year, e.g. 1EB.
        #[arg(long, value_parser = bytes)]
        base: f64,
        #[arg(long)]
        from: i32,
        #[arg(long)]
        to: i32,
        /// Divide the projection among this many users.
        #[arg(long, value_parser = users)]
        users: Option<u64>,
    },
}

fn time(s: &str) -> Result<SimTime, String> {
    parse_time(s).map_err(|e| e.to_string())
}

fn format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: comn_core::report::ReportError| e.to_string())
}

fn bytes(s: &str) -> Result<f64, String> {
    parse_bytes(s).map_err(|e| e.to_string())
}

fn ratio(s: &str) -> Result<Ratio<u64>, String> {
    s.parse().map_err(|_| format!("expected an integer or a fraction, got `{s}`"))
}

// Accepts 5000000000 as well as 5e9.
fn users(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("expected a count, got `{s}`"))?;
    if x.fract() != 0.0 || x < 0.0 || x > u64::MAX as f64 {
        return Err(format!("expected a whole count, got `{s}`"));
    }
    Ok(x as u64)
}

fn capacity(c: Capacity) -> Result<()> {
    let table = match c {
        Capacity::Cpri(ch) => cpri_table(&ch.params())?,
        Capacity::Scale {
            channel,
            base_bw,
            base_antennas,
        } => {
            let base = FronthaulParams {
                sample_width_bits: channel.sample_width,
                compression: channel.compression,
                ..FronthaulParams::lte(base_bw, base_antennas)
            };
            scale_table(&channel.params(), &base)?
        }
        Capacity::Backhaul {
            channel,
            info_rate,
            overhead,
        } => backhaul_table(&channel.params(), info_rate as f64, overhead)?,
        Capacity::Omnify {
            base,
            from,
            to,
            users,
        } => omnify_table(base, from, to, users)?,
    };
    print!("{table}");
    Ok(())
}

fn run(args: RunArgs) -> Result<ExitCode> {
    if args.scenario.is_empty() {
        bail!("nothing to do: pass --scenario PATH or a subcommand (see --help)");
    }
    let opts = RunOptions {
        seed: args.seed,
        until: args.until,
        out: args.out,
        format: args.format,
        verbose: args.verbose,
    };
    let mut code = 0u8;
    for (path, outcome) in args.scenario.iter().zip(run_files(&args.scenario, &opts)) {
        match outcome {
            Ok(o) => {
                if args.verbose {
                    for line in &o.trace {
                        println!("{line}");
                    }
                }
                println!("== {}", path.display());
                print!("{}", describe(&o.summary));
                for w in &o.written {
                    println!("wrote {}", w.display());
                }
                if o.exit_code() != 0 {
                    code = code.max(1);
                }
            }
            // Unreadable, unparsable or unwritable: the run never counted.
            Err(e) => {
                eprintln!("error: {e:#}");
                code = 2;
            }
        }
    }
    Ok(ExitCode::from(code))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Some(Command::Capacity(c)) => capacity(c).map(|()| ExitCode::SUCCESS),
        None => run(cli.run),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
