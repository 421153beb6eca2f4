//! Argument parsing and dispatch for the `qkd` binary.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use mdiqkd_core::{DeviceLine, RateMethod, SimulationMode};

use crate::commands::{emit, json_bytes, Session};
use crate::config::{DeviceConfig, DistanceScan, PolicyConfig, RunConfig};
use crate::formats::write_csv;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "qkd",
    version,
    about = "Finite-key decoy-state MDI-QKD key rates"
)]
pub struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Distance between the two senders in km.
    #[arg(long, global = true)]
    pub distance: Option<f64>,
    /// Total number of pulse pairs.
    #[arg(long, global = true)]
    pub nt: Option<f64>,
    /// normal:GAMMA, chernoff:EPS or exact.
    #[arg(long, global = true)]
    pub policy: Option<String>,
    /// Comma-separated list of this_work, joint_separate, independent (or all).
    #[arg(long, global = true, value_delimiter = ',')]
    pub method: Vec<String>,
    /// Named device line: a, b or c.
    #[arg(long, global = true)]
    pub device: Option<String>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to every core.
    #[arg(long, global = true, env = "QKD_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate observed statistics for explicit source parameters.
    Simulate {
        /// Draw counts instead of using their expectations.
        #[arg(long)]
        sampled: bool,
    },
    /// Key rate from a statistics file, or from simulated statistics.
    Keyrate {
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Optimize source parameters at one point.
    Optimize,
    /// Rate versus distance (CSV).
    Scan {
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
    },
    /// Rate versus total number of pulse pairs (CSV).
    Ntscan {
        #[arg(long, value_delimiter = ',')]
        nt_list: Vec<f64>,
    },
    /// All three analyses at one point (CSV).
    Compare,
}

fn parse_methods(items: &[String]) -> Result<Vec<RateMethod>, CliError> {
    let mut out = Vec::new();
    for item in items {
        if item == "all" {
            out.extend(RateMethod::ALL);
            continue;
        }
        match RateMethod::from_label(item) {
            Some(m) => out.push(m),
            None => return Err(CliError::validation(format!("unknown method '{item}'"))),
        }
    }
    Ok(out)
}

/// Loads the configuration file and applies flag overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(d) = cli.distance {
        config.distance_km = d;
    }
    if let Some(nt) = cli.nt {
        config.n_total = nt;
    }
    if let Some(p) = &cli.policy {
        config.policy = PolicyConfig::parse(p).map_err(CliError::validation)?;
    }
    if !cli.method.is_empty() {
        config.methods = parse_methods(&cli.method)?;
    }
    if let Some(d) = &cli.device {
        let line = match d.as_str() {
            "a" => DeviceLine::A,
            "b" => DeviceLine::B,
            "c" => DeviceLine::C,
            _ => return Err(CliError::validation(format!("unknown device line '{d}'"))),
        };
        config.device = DeviceConfig::Line(line);
    }
    if let Some(out) = &cli.out {
        config.out = Some(out.clone());
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
        config.search.seed = seed;
    }
    match &cli.command {
        Command::Simulate { sampled: true } => config.mode = SimulationMode::Sampled,
        Command::Keyrate { stats: Some(path) } => config.stats = Some(path.clone()),
        Command::Scan { from, to, step } => {
            let base = config.scan.unwrap_or(DistanceScan {
                from: 0.0,
                to: 100.0,
                step: 10.0,
            });
            config.scan = Some(DistanceScan {
                from: from.unwrap_or(base.from),
                to: to.unwrap_or(base.to),
                step: step.unwrap_or(base.step),
            });
        }
        Command::Ntscan { nt_list } if !nt_list.is_empty() => config.nt_list = nt_list.clone(),
        _ => {}
    }
    Ok(config)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = resolve_config(&cli)?;
    let session = Session::new(config, cli.threads)?;
    let out = session.config.out.clone();
    let out = out.as_deref();
    match &cli.command {
        Command::Simulate { .. } => emit(out, &json_bytes(&session.simulate()?)),
        Command::Keyrate { .. } => emit(out, &json_bytes(&session.keyrate()?)),
        Command::Optimize => emit(out, &json_bytes(&session.optimize()?)),
        Command::Scan { .. } => {
            let points = session.config.scan.map(|s| s.points()).unwrap_or_default();
            csv_out(out, &session.scan_distance(&points)?)
        }
        Command::Ntscan { .. } => {
            let list = session.config.nt_list.clone();
            csv_out(out, &session.scan_ntotal(&list)?)
        }
        Command::Compare => csv_out(out, &session.compare()?),
    }
}

fn csv_out(
    out: Option<&std::path::Path>,
    rows: &[crate::formats::CurveRow],
) -> Result<(), CliError> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    emit(out, &buf)
}

/// Runs the tool and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
