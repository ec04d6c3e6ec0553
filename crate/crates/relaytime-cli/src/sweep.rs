//! Experiment runners: expand the config into a point grid, evaluate the
//! points (concurrently, but collected in grid order), and render the
//! experiment's fixed CSV schema.
//!
//! A point whose answer is infinite, or whose evaluation fails, becomes a
//! *flagged* row — `finite_flag = 0` with `inf`/`NaN` value cells — rather
//! than aborting the sweep. The caller turns the flagged count into the
//! process exit code.

use std::io::Write;

use anyhow::{Context, Result};
use rayon::prelude::*;
use relaytime::mc::{estimate, McConfig};
use relaytime::model::{
    uniform_chain_x, InterferenceMode, PathLossKind, PathLossModel, SystemParams,
};
use relaytime::moments::{
    chain_moments, check_divergence, covariance_curve, DivergenceStatus, EvalContext,
};
use relaytime::pmf::{independent_pmf, travel_time_pmf};
use relaytime::quad::IntegrationSpec;
use relaytime::speed::{asymptotic_speed, SpeedReport};

use crate::config::{ExperimentConfig, ExperimentKind};

/// One rendered CSV row plus whether the point had to be flagged.
#[derive(Debug, Clone)]
pub struct Row {
    pub cells: String,
    pub flagged: bool,
}

impl Row {
    fn ok(cells: String) -> Row {
        Row {
            cells,
            flagged: false,
        }
    }

    fn flagged(cells: String) -> Row {
        Row {
            cells,
            flagged: true,
        }
    }
}

/// The evaluated sweep, ready to serialize.
#[derive(Debug)]
pub struct SweepOutput {
    /// Schema-specific `# key = value` lines (the pmf error bounds) that
    /// belong between the config echo and the column header.
    pub preamble: Vec<String>,
    /// Comma-joined column names.
    pub columns: String,
    /// Data rows in grid order.
    pub rows: Vec<Row>,
}

impl SweepOutput {
    pub fn flagged_rows(&self) -> usize {
        self.rows.iter().filter(|row| row.flagged).count()
    }
}

/// Serializes a finished sweep: tool version, exact config echo, any
/// schema preamble, then the column header and the rows. Nothing here
/// depends on time, environment, or worker count, which is what makes
/// repeated runs byte-identical.
pub fn write_csv<W: Write>(
    cfg: &ExperimentConfig,
    output: &SweepOutput,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "## relaytime {}", env!("CARGO_PKG_VERSION"))?;
    write!(out, "{}", cfg.echo())?;
    for line in &output.preamble {
        writeln!(out, "{line}")?;
    }
    writeln!(out, "{}", output.columns)?;
    for row in &output.rows {
        writeln!(out, "{}", row.cells)?;
    }
    Ok(())
}

/// Runs the experiment the config names. Per-point trouble lands in
/// flagged rows; only malformed inputs and I/O get to error out.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    match cfg.experiment {
        ExperimentKind::MeanVsHops | ExperimentKind::VarVsHopsFixedSpan => moment_sweep(cfg, true),
        ExperimentKind::VarVsHopsFixedHop => moment_sweep(cfg, false),
        ExperimentKind::CovVsDistance => covariance_sweep(cfg),
        ExperimentKind::SpeedVsHopLength => speed_sweep(cfg),
        ExperimentKind::Pmf => pmf_table(cfg),
        ExperimentKind::Validate => validate_sweep(cfg),
    }
}

fn integration_spec(cfg: &ExperimentConfig) -> IntegrationSpec {
    IntegrationSpec::with_tols(cfg.rel_tol, cfg.abs_tol)
}

fn system_params(
    cfg: &ExperimentConfig,
    intensity: f64,
    transmit_prob: f64,
    mode: InterferenceMode,
) -> Result<SystemParams> {
    let path_loss = match cfg.path_loss {
        PathLossKind::Bounded => PathLossModel::bounded(cfg.alpha),
        PathLossKind::Singular => PathLossModel::singular(cfg.alpha),
    }?;
    Ok(SystemParams::new(
        intensity,
        transmit_prob,
        cfg.sir_threshold,
        path_loss,
        mode,
    )?)
}

fn warn_point(cfg: &ExperimentConfig, what: &str, err: &dyn std::fmt::Display) {
    eprintln!("warning: {}: {what}: {err}", cfg.experiment);
}

/// The fixed-span sweeps (`fixed_span`: L = span/N) and the fixed-hop
/// sweep share one evaluator; they differ only in how the hop length
/// enters the grid and whether it gets a column.
fn moment_sweep(cfg: &ExperimentConfig, fixed_span: bool) -> Result<SweepOutput> {
    let transmit_prob = cfg.transmit_probs[0];
    let mut points = Vec::new();
    for &intensity in &cfg.intensities {
        let lengths: Vec<f64> = if fixed_span {
            vec![f64::NAN] // placeholder; the per-N span division happens below
        } else {
            cfg.hop_lengths.clone()
        };
        for &length in &lengths {
            for &hops in &cfg.hops {
                for &mode in &cfg.modes {
                    let hop_length = if fixed_span {
                        cfg.span / f64::from(hops)
                    } else {
                        length
                    };
                    points.push((intensity, hop_length, hops, mode));
                }
            }
        }
    }

    let rows = points
        .par_iter()
        .map(|&(intensity, hop_length, hops, mode)| {
            let prefix = if fixed_span {
                format!("{hops},{intensity},{mode}")
            } else {
                format!("{hops},{hop_length},{intensity},{mode}")
            };
            let point = || -> relaytime::Result<Option<(f64, f64)>> {
                let params = system_params(cfg, intensity, transmit_prob, mode)
                    .expect("config ranges were validated at parse time");
                let ctx = EvalContext::with_spec(&params, integration_spec(cfg));
                let chain = uniform_chain_x(hops as usize, hop_length)?;
                let report = chain_moments(&ctx, &chain)?;
                Ok(report.total_mean().zip(report.total_var()))
            };
            match point() {
                Ok(Some((mean, variance))) => {
                    Row::ok(format!("{prefix},{mean:e},{variance:e},1"))
                }
                Ok(None) => Row::flagged(format!("{prefix},inf,inf,0")),
                Err(err) => {
                    warn_point(cfg, &format!("point ({prefix})"), &err);
                    Row::flagged(format!("{prefix},NaN,NaN,0"))
                }
            }
        })
        .collect();

    let columns = if fixed_span {
        "N,lambda,mode,E_T,Var_T,finite_flag"
    } else {
        "N,hop_length,lambda,mode,E_T,Var_T,finite_flag"
    };
    Ok(SweepOutput {
        preamble: Vec::new(),
        columns: columns.to_string(),
        rows,
    })
}

/// Pairwise link covariance against receiver separation, one curve per
/// intensity. The library evaluates a whole curve at once, so the
/// parallel unit is the intensity, not the single separation.
fn covariance_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let transmit_prob = cfg.transmit_probs[0];
    let hop_length = cfg.hop_lengths[0];
    let distances: Vec<f64> = cfg
        .separations
        .iter()
        .map(|&s| f64::from(s) * hop_length)
        .collect();

    let curves: Vec<Vec<Row>> = cfg
        .intensities
        .par_iter()
        .map(|&intensity| {
            let params = system_params(cfg, intensity, transmit_prob, InterferenceMode::Dependent)
                .expect("config ranges were validated at parse time");
            let row = |sep: u32, value: &str, flagged: bool| {
                let cells = format!("{intensity},{sep},{value}");
                if flagged {
                    Row::flagged(cells)
                } else {
                    Row::ok(format!("{cells},1"))
                }
            };
            if check_divergence(&params) != DivergenceStatus::Finite {
                return cfg
                    .separations
                    .iter()
                    .map(|&s| row(s, "inf,0", true))
                    .collect();
            }
            let ctx = EvalContext::with_spec(&params, integration_spec(cfg));
            match covariance_curve(&ctx, hop_length, &distances) {
                Ok(curve) => cfg
                    .separations
                    .iter()
                    .zip(curve)
                    .map(|(&s, (_, value))| row(s, &format!("{value:e}"), false))
                    .collect(),
                Err(err) => {
                    warn_point(cfg, &format!("intensity {intensity}"), &err);
                    cfg.separations
                        .iter()
                        .map(|&s| row(s, "NaN,0", true))
                        .collect()
                }
            }
        })
        .collect();

    Ok(SweepOutput {
        preamble: Vec::new(),
        columns: "lambda,separation,covariance,finite_flag".to_string(),
        rows: curves.into_iter().flatten().collect(),
    })
}

/// Asymptotic speed against hop length. A divergent point is an answer
/// (speed 0) but still counts as flagged so the exit code reports it;
/// the schema is the library's own speed CSV.
fn speed_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let mut points = Vec::new();
    for &intensity in &cfg.intensities {
        for &transmit_prob in &cfg.transmit_probs {
            for &hop_length in &cfg.hop_lengths {
                for &mode in &cfg.modes {
                    points.push((intensity, transmit_prob, hop_length, mode));
                }
            }
        }
    }

    let rows = points
        .par_iter()
        .map(|&(intensity, transmit_prob, hop_length, mode)| {
            let params = system_params(cfg, intensity, transmit_prob, mode)
                .expect("config ranges were validated at parse time");
            let ctx = EvalContext::with_spec(&params, integration_spec(cfg));
            match asymptotic_speed(&ctx, hop_length) {
                Ok(report) if report.is_divergent() => Row::flagged(report.csv_row()),
                Ok(report) => Row::ok(report.csv_row()),
                Err(err) => {
                    let point = format!(
                        "{hop_length},{transmit_prob},{intensity},{},{},{mode}",
                        cfg.sir_threshold, cfg.alpha
                    );
                    warn_point(cfg, &format!("point ({point})"), &err);
                    Row::flagged(format!("{point},NaN"))
                }
            }
        })
        .collect();

    Ok(SweepOutput {
        preamble: Vec::new(),
        columns: SpeedReport::csv_header().to_string(),
        rows,
    })
}

/// The exact distribution table. This one reuses the library's own CSV
/// rendering wholesale so the tool and `PmfTable::write_csv` can never
/// drift apart.
fn pmf_table(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let params = system_params(cfg, cfg.intensities[0], cfg.transmit_probs[0], cfg.modes[0])?;
    let ctx = EvalContext::with_spec(&params, integration_spec(cfg));
    let chain = uniform_chain_x(cfg.hops[0] as usize, cfg.hop_lengths[0])?;
    let table = match cfg.modes[0] {
        InterferenceMode::Dependent => travel_time_pmf(&ctx, &chain, cfg.t_max),
        InterferenceMode::Independent => independent_pmf(&ctx, &chain, cfg.t_max),
    }
    .context("distribution table")?;

    let mut rendered = Vec::new();
    table.write_csv(&mut rendered)?;
    let rendered = String::from_utf8(rendered).expect("CSV rendering is ASCII");
    let mut preamble = Vec::new();
    let mut columns = String::new();
    let mut rows = Vec::new();
    for line in rendered.lines() {
        if line.starts_with('#') {
            preamble.push(line.to_string());
        } else if columns.is_empty() {
            columns = line.to_string();
        } else {
            rows.push(Row::ok(line.to_string()));
        }
    }
    Ok(SweepOutput {
        preamble,
        columns,
        rows,
    })
}

/// Analytic moments against a Monte Carlo run at every grid point. A
/// divergent point skips the simulation — censoring would dominate and
/// the comparison means nothing — and shows up flagged.
fn validate_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let hops = cfg.hops[0];
    let hop_length = cfg.span / f64::from(hops);
    let mut points = Vec::new();
    for &intensity in &cfg.intensities {
        for &transmit_prob in &cfg.transmit_probs {
            for &mode in &cfg.modes {
                points.push((intensity, transmit_prob, mode));
            }
        }
    }

    let rows = points
        .par_iter()
        .map(|&(intensity, transmit_prob, mode)| {
            let prefix = format!("{intensity},{transmit_prob},{mode}");
            let params = system_params(cfg, intensity, transmit_prob, mode)
                .expect("config ranges were validated at parse time");
            if check_divergence(&params) != DivergenceStatus::Finite {
                return Row::flagged(format!(
                    "{prefix},inf,NaN,NaN,NaN,inf,NaN,NaN,NaN,0,0"
                ));
            }
            let point = || -> relaytime::Result<Row> {
                let ctx = EvalContext::with_spec(&params, integration_spec(cfg));
                let chain = uniform_chain_x(hops as usize, hop_length)?;
                let report = chain_moments(&ctx, &chain)?;
                let (mean, variance) = report
                    .total_mean()
                    .zip(report.total_var())
                    .expect("divergence was checked above");
                let mc = estimate(&chain, &params, &McConfig::new(cfg.trials, cfg.seed))?;
                let z_mean = z_score(mc.mean - mean, mc.standard_error_of_mean);
                let z_var = z_score(
                    mc.variance - variance,
                    mc.standard_error_of_variance,
                );
                Ok(Row::ok(format!(
                    "{prefix},{mean:e},{:e},{:e},{z_mean},{variance:e},{:e},{:e},{z_var},{},1",
                    mc.mean,
                    mc.standard_error_of_mean,
                    mc.variance,
                    mc.standard_error_of_variance,
                    mc.censored_count
                )))
            };
            point().unwrap_or_else(|err| {
                warn_point(cfg, &format!("point ({prefix})"), &err);
                Row::flagged(format!(
                    "{prefix},NaN,NaN,NaN,NaN,NaN,NaN,NaN,NaN,0,0"
                ))
            })
        })
        .collect();

    Ok(SweepOutput {
        preamble: Vec::new(),
        columns: "lambda,transmit_prob,mode,analytic_mean,mc_mean,se_mean,z_mean,\
                  analytic_var,mc_var,se_var,z_var,censored,finite_flag"
            .to_string(),
        rows,
    })
}

/// An exact hit with zero standard error is a perfect agreement, not a
/// 0/0; this shows up at intensity 0, where the travel time is
/// deterministic on both routes.
fn z_score(diff: f64, standard_error: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else {
        diff / standard_error
    }
}
