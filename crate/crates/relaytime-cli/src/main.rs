//! Deterministic experiment sweeps over the relay-chain travel-time model.
//!
//! The tool reads a flat key-value config (see [`config`] for the grammar
//! and per-experiment defaults), evaluates the grid, and writes one CSV to
//! stdout or `--out`. The CSV header echoes the tool version and every
//! effective parameter — seed and tolerances included — so the file is
//! reproducible bit-for-bit from its own header, whatever the worker
//! count.
//!
//! Exit status: 0 on success; on partial failure the code is the number
//! of flagged rows (points whose answer is infinite or whose evaluation
//! failed, capped at 255); hard errors (unreadable or malformed configs,
//! I/O) exit 1 with a message on stderr.

mod config;
mod sweep;

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{ensure, Context, Result};
use clap::{Parser, Subcommand};

use config::{load_config, ExperimentKind};

/// Travel-time sweeps for a wireless relay chain in a Poisson
/// interference field.
#[derive(Parser)]
#[command(name = "relaytime", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Master seed for the Monte Carlo streams (validate runs).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trial count (validate runs).
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Relative tolerance for the certified quadrature.
    #[arg(long, global = true, value_name = "REL_TOL")]
    tol: Option<f64>,
    /// Write the CSV here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment the config names
    Run { config: PathBuf },
    /// Cross-check the analytic moments against Monte Carlo
    Validate { config: PathBuf },
    /// Tabulate the exact travel-time distribution
    Pmf { config: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(flagged) => ExitCode::from(u8::try_from(flagged).unwrap_or(u8::MAX)),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<usize> {
    let (path, expected) = match &cli.command {
        Command::Run { config } => (config, None),
        Command::Validate { config } => (config, Some(ExperimentKind::Validate)),
        Command::Pmf { config } => (config, Some(ExperimentKind::Pmf)),
    };
    let mut cfg =
        load_config(path, expected).with_context(|| format!("config {}", path.display()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        ensure!(trials > 0, "--trials: at least one trial is required");
        cfg.trials = trials;
    }
    if let Some(tol) = cli.tol {
        ensure!(
            tol.is_finite() && tol > 0.0,
            "--tol: tolerance must be finite and > 0"
        );
        cfg.rel_tol = tol;
    }
    if let Some(out) = cli.out {
        cfg.out = Some(out);
    }

    let output = sweep::run_experiment(&cfg)?;
    match &cfg.out {
        Some(out) => {
            let file = File::create(out)
                .with_context(|| format!("cannot create {}", out.display()))?;
            sweep::write_csv(&cfg, &output, BufWriter::new(file))?;
        }
        None => sweep::write_csv(&cfg, &output, std::io::stdout().lock())?,
    }

    let flagged = output.flagged_rows();
    eprintln!(
        "{}: {} rows, {} flagged -> {}",
        cfg.experiment,
        output.rows.len(),
        flagged,
        cfg.out
            .as_deref()
            .map_or_else(|| "stdout".to_string(), |p| p.display().to_string()),
    );
    Ok(flagged)
}
