//! Sweep runner CLI.
//!
//! Loads an optional TOML config (see `vecsim::harness` for the schema),
//! applies flag overrides, runs the sweep, and writes the result CSV.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::Parser;

use vecsim::baselines::Scheme;
use vecsim::harness::{emit_csv, run_experiment, FileConfig, SweepAxis};

#[derive(Debug, Parser)]
#[command(
    name = "vecsim",
    about = "Vehicular edge computing energy sweeps: one-by-one offloading vs. baselines",
    after_help = "Flags override the config file. Without --config, built-in defaults \
                  (three lanes, 20 MHz, 75 Mbit tasks) are used."
)]
struct Cli {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Sweep axis: T (deadline s), L (input bits), or K (vehicles).
    #[arg(long)]
    sweep: Option<String>,

    /// Comma-separated axis values, ascending (e.g. 10,15,20,25).
    #[arg(long)]
    values: Option<String>,

    /// Comma-separated schemes: one-by-one, orthogonal, equal-bit, local.
    #[arg(long)]
    schemes: Option<String>,

    /// Number of Monte Carlo seeds per axis value.
    #[arg(long)]
    seeds: Option<usize>,

    /// Base seed; point i uses base-seed + i.
    #[arg(long)]
    base_seed: Option<u64>,

    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), String> {
    let mut file = match &cli.config {
        Some(path) => FileConfig::load(path).map_err(|e| e.to_string())?,
        None => FileConfig::default(),
    };
    if let Some(sweep) = &cli.sweep {
        SweepAxis::from_str(sweep)?;
        file.experiment.sweep = sweep.clone();
        // Values sized for another axis make no sense; fall back to the
        // axis defaults unless --values pins them.
        if cli.values.is_none() {
            file.experiment.values.clear();
        }
    }
    if let Some(values) = &cli.values {
        file.experiment.values = values
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad value '{v}': {e}")))
            .collect::<Result<Vec<_>, _>>()?;
    }
    if let Some(schemes) = &cli.schemes {
        let parsed: Vec<Scheme> = schemes
            .split(',')
            .map(Scheme::from_str)
            .collect::<Result<Vec<_>, _>>()?;
        file.experiment.schemes = parsed.iter().map(|s| s.tag().to_string()).collect();
    }
    if let Some(seeds) = cli.seeds {
        file.experiment.num_seeds = seeds;
    }
    if let Some(base_seed) = cli.base_seed {
        file.experiment.base_seed = base_seed;
    }
    if let Some(out) = &cli.out {
        file.experiment.out = out.display().to_string();
    }

    let (spec, out_path) = file.into_spec().map_err(|e| e.to_string())?;
    eprintln!(
        "sweep {} over {:?}, {} seed(s), schemes {:?}",
        spec.axis,
        spec.values,
        spec.num_seeds,
        spec.schemes.iter().map(|s| s.tag()).collect::<Vec<_>>()
    );
    let started = Instant::now();
    let rows = run_experiment(&spec).map_err(|e| e.to_string())?;
    emit_csv(&rows, &out_path).map_err(|e| e.to_string())?;
    eprintln!(
        "wrote {} rows to {} in {:.1}s",
        rows.len(),
        out_path.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
