//! Flat key-value experiment configs and their canonical echo.
//!
//! The grammar is one `key = value` assignment per line; `#` starts a
//! comment and blank lines are skipped. Numeric lists are comma-separated
//! (`intensity = 0.25, 0.75, 1, 2`) and the integer-valued grid keys also
//! accept an inclusive range (`hops = 1..20`). A config names an
//! experiment and overrides whichever keys apply to it; everything else
//! takes that experiment's published default, so the one-line config
//! `experiment = mean_vs_N` reproduces the full default sweep.
//!
//! Every effective value echoes back into the CSV header as `# key = value`
//! lines, and [`ExperimentConfig::echo`] is exact: stripping the `# `
//! prefix and re-parsing yields the identical config. Unknown keys, keys
//! that have no effect on the named experiment, and out-of-range values
//! are all errors that cite the offending line.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use relaytime::model::{InterferenceMode, PathLossKind};
use thiserror::Error;

/// Which sweep the tool runs; each maps to one CSV schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// E[T] and Var[T] against the hop count at fixed span (L = span/N).
    MeanVsHops,
    /// The same sweep with the variance as the headline column.
    VarVsHopsFixedSpan,
    /// Var[T] against the hop count at fixed per-hop length.
    VarVsHopsFixedHop,
    /// Pairwise link covariance against receiver separation.
    CovVsDistance,
    /// End-to-end speed against the hop length.
    SpeedVsHopLength,
    /// Exact distribution table of the total travel time.
    Pmf,
    /// Monte Carlo cross-check of the analytic moments.
    Validate,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::MeanVsHops => "mean_vs_N",
            ExperimentKind::VarVsHopsFixedSpan => "var_vs_N_fixed_span",
            ExperimentKind::VarVsHopsFixedHop => "var_vs_N_fixed_hop",
            ExperimentKind::CovVsDistance => "cov_vs_distance",
            ExperimentKind::SpeedVsHopLength => "speed_vs_L",
            ExperimentKind::Pmf => "pmf",
            ExperimentKind::Validate => "validate",
        }
    }

    fn from_name(name: &str) -> Option<ExperimentKind> {
        Some(match name {
            "mean_vs_N" => ExperimentKind::MeanVsHops,
            "var_vs_N_fixed_span" => ExperimentKind::VarVsHopsFixedSpan,
            "var_vs_N_fixed_hop" => ExperimentKind::VarVsHopsFixedHop,
            "cov_vs_distance" => ExperimentKind::CovVsDistance,
            "speed_vs_L" => ExperimentKind::SpeedVsHopLength,
            "pmf" => ExperimentKind::Pmf,
            "validate" => ExperimentKind::Validate,
            _ => return None,
        })
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully resolved experiment description: the named experiment's
/// defaults with the config file's overrides applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Interference modes to sweep, canonically dependent-then-independent.
    pub modes: Vec<InterferenceMode>,
    pub path_loss: PathLossKind,
    pub alpha: f64,
    pub sir_threshold: f64,
    pub transmit_probs: Vec<f64>,
    pub intensities: Vec<f64>,
    pub hops: Vec<u32>,
    /// Total chain span for the fixed-span sweeps: L = span / N.
    pub span: f64,
    pub hop_lengths: Vec<f64>,
    /// Receiver separations in hops for the covariance sweep.
    pub separations: Vec<u32>,
    /// Distribution horizon in slots for the pmf experiment.
    pub t_max: u32,
    pub trials: u64,
    pub seed: u64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub out: Option<PathBuf>,
}

/// Keys every experiment accepts; `trials` and `seed` are inert outside
/// `validate` but stay legal so the echoed header of any experiment
/// re-parses unchanged.
const UNIVERSAL_KEYS: &[&str] = &[
    "experiment",
    "mode",
    "path_loss",
    "alpha",
    "sir_threshold",
    "transmit_prob",
    "intensity",
    "trials",
    "seed",
    "rel_tol",
    "abs_tol",
    "out",
];

const GRID_KEYS: &[&str] = &["hops", "span", "hop_length", "separations", "t_max"];

/// The geometry/horizon keys the given experiment actually consumes, in
/// echo order.
fn extra_keys(kind: ExperimentKind) -> &'static [&'static str] {
    match kind {
        ExperimentKind::MeanVsHops
        | ExperimentKind::VarVsHopsFixedSpan
        | ExperimentKind::Validate => &["hops", "span"],
        ExperimentKind::VarVsHopsFixedHop => &["hops", "hop_length"],
        ExperimentKind::CovVsDistance => &["hop_length", "separations"],
        ExperimentKind::SpeedVsHopLength => &["hop_length"],
        ExperimentKind::Pmf => &["hops", "hop_length", "t_max"],
    }
}

impl ExperimentConfig {
    /// The published default grid for an experiment; a minimal config
    /// overrides nothing and runs exactly this.
    pub fn defaults(kind: ExperimentKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            experiment: kind,
            modes: vec![InterferenceMode::Dependent, InterferenceMode::Independent],
            path_loss: PathLossKind::Bounded,
            alpha: 3.0,
            sir_threshold: 0.1,
            transmit_probs: vec![1.0],
            intensities: vec![0.25, 0.75, 1.0, 2.0],
            hops: (1..=20).collect(),
            span: 1.0,
            hop_lengths: vec![1.0],
            separations: (1..=10).collect(),
            t_max: 20,
            trials: 100_000,
            seed: 42,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            out: None,
        };
        match kind {
            ExperimentKind::MeanVsHops => {}
            ExperimentKind::VarVsHopsFixedSpan => {
                cfg.hops = (1..=10).collect();
            }
            ExperimentKind::VarVsHopsFixedHop => {
                cfg.hops = (1..=10).collect();
                cfg.intensities = vec![2.0];
                cfg.hop_lengths = vec![0.1, 0.25, 0.5, 0.75, 1.0];
            }
            ExperimentKind::CovVsDistance => {
                cfg.modes = vec![InterferenceMode::Dependent];
                cfg.transmit_probs = vec![0.5];
                cfg.intensities = vec![0.5, 1.0, 2.0];
            }
            ExperimentKind::SpeedVsHopLength => {
                cfg.sir_threshold = 0.2;
                cfg.transmit_probs = vec![0.25, 0.5, 0.75];
                cfg.intensities = vec![0.25];
                cfg.hop_lengths = vec![1.0, 2.0, 3.0, 4.0, 5.0];
            }
            ExperimentKind::Pmf => {
                cfg.modes = vec![InterferenceMode::Dependent];
                cfg.transmit_probs = vec![0.5];
                cfg.intensities = vec![0.5];
                cfg.hops = vec![2];
                cfg.hop_lengths = vec![0.5];
            }
            ExperimentKind::Validate => {
                cfg.transmit_probs = vec![0.5];
                cfg.intensities = vec![0.25];
                cfg.hops = vec![3];
            }
        }
        cfg
    }

    /// The canonical `# key = value` header block. Exact by construction:
    /// stripping the `# ` prefixes and re-parsing yields `self` again.
    pub fn echo(&self) -> String {
        let mut lines: Vec<(&str, String)> = vec![
            ("experiment", self.experiment.to_string()),
            ("mode", mode_word(&self.modes).to_string()),
            ("path_loss", self.path_loss.to_string()),
            ("alpha", format_f64(self.alpha)),
            ("sir_threshold", format_f64(self.sir_threshold)),
            ("transmit_prob", format_f64_list(&self.transmit_probs)),
            ("intensity", format_f64_list(&self.intensities)),
        ];
        for key in extra_keys(self.experiment) {
            let value = match *key {
                "hops" => format_u32_list(&self.hops),
                "span" => format_f64(self.span),
                "hop_length" => format_f64_list(&self.hop_lengths),
                "separations" => format_u32_list(&self.separations),
                "t_max" => self.t_max.to_string(),
                _ => unreachable!("echo covers every grid key"),
            };
            lines.push((key, value));
        }
        lines.push(("trials", self.trials.to_string()));
        lines.push(("seed", self.seed.to_string()));
        lines.push(("rel_tol", format!("{:e}", self.rel_tol)));
        lines.push(("abs_tol", format!("{:e}", self.abs_tol)));
        if let Some(out) = &self.out {
            lines.push(("out", out.display().to_string()));
        }
        lines
            .into_iter()
            .map(|(key, value)| format!("# {key} = {value}\n"))
            .collect()
    }
}

fn mode_word(modes: &[InterferenceMode]) -> &'static str {
    match modes {
        [InterferenceMode::Dependent] => "dependent",
        [InterferenceMode::Independent] => "independent",
        _ => "both",
    }
}

/// `{}` on f64 prints the shortest digits that parse back to the same
/// bits, which is what makes the echo exact.
fn format_f64(value: f64) -> String {
    format!("{value}")
}

fn format_f64_list(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format_f64(*v))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Contiguous ascending runs echo as the `a..b` range sugar the parser
/// accepts; anything else falls back to a comma list.
fn format_u32_list(values: &[u32]) -> String {
    let contiguous = values.len() >= 2
        && values.windows(2).all(|w| w[1] == w[0] + 1);
    if contiguous {
        format!("{}..{}", values[0], values[values.len() - 1])
    } else {
        values
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(", ")
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: key `{key}` has no effect on experiment `{experiment}`")]
    InapplicableKey {
        line: usize,
        key: String,
        experiment: ExperimentKind,
    },
    #[error("line {line}: {key}: {message}")]
    BadValue {
        line: usize,
        key: String,
        message: String,
    },
    #[error(
        "config names `experiment = {in_config}` but the subcommand expects `{expected}`"
    )]
    VerbMismatch {
        in_config: ExperimentKind,
        expected: ExperimentKind,
    },
    #[error(
        "no experiment named: add an `experiment = <name>` line or use the \
         `validate`/`pmf` subcommand"
    )]
    MissingExperiment,
    #[error("{0}")]
    Constraint(String),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

/// Reads and resolves a config file. `expected` is the experiment a
/// subcommand implies: the `validate` and `pmf` verbs pass it so their
/// configs may omit the `experiment` line (and must not contradict it).
pub fn load_config(
    path: &Path,
    expected: Option<ExperimentKind>,
) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, expected)
}

/// Parses config text against the named (or implied) experiment's
/// defaults. See the module docs for the grammar.
pub fn parse_config(
    text: &str,
    expected: Option<ExperimentKind>,
) -> Result<ExperimentConfig, ConfigError> {
    let mut entries: Vec<(usize, &str, &str)> = Vec::new();
    let mut key_lines: HashMap<&str, usize> = HashMap::new();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let code = match raw.find('#') {
            Some(hash) => &raw[..hash],
            None => raw,
        }
        .trim();
        if code.is_empty() {
            continue;
        }
        let Some((key, value)) = code.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                text: code.to_string(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                text: code.to_string(),
            });
        }
        if !UNIVERSAL_KEYS.contains(&key) && !GRID_KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            });
        }
        if key_lines.insert(key, line).is_some() {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
        entries.push((line, key, value));
    }

    let named = entries.iter().find(|(_, key, _)| *key == "experiment");
    let kind = match (named, expected) {
        (Some(&(line, _, value)), want) => {
            let kind = ExperimentKind::from_name(value).ok_or_else(|| {
                ConfigError::BadValue {
                    line,
                    key: "experiment".to_string(),
                    message: format!(
                        "no experiment named `{value}`; expected one of mean_vs_N, \
                         var_vs_N_fixed_span, var_vs_N_fixed_hop, cov_vs_distance, \
                         speed_vs_L, pmf, validate"
                    ),
                }
            })?;
            if let Some(want) = want {
                if want != kind {
                    return Err(ConfigError::VerbMismatch {
                        in_config: kind,
                        expected: want,
                    });
                }
            }
            kind
        }
        (None, Some(want)) => want,
        (None, None) => return Err(ConfigError::MissingExperiment),
    };

    let mut cfg = ExperimentConfig::defaults(kind);
    for &(line, key, value) in &entries {
        if GRID_KEYS.contains(&key) && !extra_keys(kind).contains(&key) {
            return Err(ConfigError::InapplicableKey {
                line,
                key: key.to_string(),
                experiment: kind,
            });
        }
        match key {
            "experiment" => {}
            "mode" => cfg.modes = parse_modes(line, value)?,
            "path_loss" => cfg.path_loss = parse_path_loss(line, value)?,
            "alpha" => {
                cfg.alpha = parse_f64(line, key, value)?;
                if !cfg.alpha.is_finite() || cfg.alpha <= 2.0 {
                    return Err(bad(line, key, "path-loss exponent must be > 2"));
                }
            }
            "sir_threshold" => {
                cfg.sir_threshold = parse_f64(line, key, value)?;
                if !cfg.sir_threshold.is_finite() || cfg.sir_threshold <= 0.0 {
                    return Err(bad(line, key, "SIR threshold must be finite and > 0"));
                }
            }
            "transmit_prob" => {
                cfg.transmit_probs = parse_f64_list(line, key, value)?;
                if cfg.transmit_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(bad(line, key, "every probability must lie in [0, 1]"));
                }
            }
            "intensity" => {
                cfg.intensities = parse_f64_list(line, key, value)?;
                if cfg.intensities.iter().any(|l| !l.is_finite() || *l < 0.0) {
                    return Err(bad(line, key, "every intensity must be finite and >= 0"));
                }
            }
            "hops" => cfg.hops = parse_u32_list(line, key, value, 1)?,
            "span" => {
                cfg.span = parse_f64(line, key, value)?;
                if !cfg.span.is_finite() || cfg.span <= 0.0 {
                    return Err(bad(line, key, "span must be finite and > 0"));
                }
            }
            "hop_length" => {
                cfg.hop_lengths = parse_f64_list(line, key, value)?;
                if cfg.hop_lengths.iter().any(|l| !l.is_finite() || *l <= 0.0) {
                    return Err(bad(line, key, "every hop length must be finite and > 0"));
                }
            }
            "separations" => cfg.separations = parse_u32_list(line, key, value, 1)?,
            "t_max" => {
                cfg.t_max = parse_int(line, key, value)?;
                if cfg.t_max == 0 {
                    return Err(bad(line, key, "horizon must be at least one slot"));
                }
            }
            "trials" => {
                cfg.trials = parse_int(line, key, value)?;
                if cfg.trials == 0 {
                    return Err(bad(line, key, "at least one trial is required"));
                }
            }
            "seed" => cfg.seed = parse_int(line, key, value)?,
            "rel_tol" => {
                cfg.rel_tol = parse_f64(line, key, value)?;
                if !cfg.rel_tol.is_finite() || cfg.rel_tol <= 0.0 {
                    return Err(bad(line, key, "tolerance must be finite and > 0"));
                }
            }
            "abs_tol" => {
                cfg.abs_tol = parse_f64(line, key, value)?;
                if !cfg.abs_tol.is_finite() || cfg.abs_tol <= 0.0 {
                    return Err(bad(line, key, "tolerance must be finite and > 0"));
                }
            }
            "out" => cfg.out = Some(PathBuf::from(value)),
            _ => unreachable!("key set checked above"),
        }
    }

    check_shape(&cfg, &key_lines)?;
    Ok(cfg)
}

fn bad(line: usize, key: &str, message: &str) -> ConfigError {
    ConfigError::BadValue {
        line,
        key: key.to_string(),
        message: message.to_string(),
    }
}

fn parse_modes(line: usize, value: &str) -> Result<Vec<InterferenceMode>, ConfigError> {
    match value {
        "dependent" => Ok(vec![InterferenceMode::Dependent]),
        "independent" => Ok(vec![InterferenceMode::Independent]),
        "both" => Ok(vec![
            InterferenceMode::Dependent,
            InterferenceMode::Independent,
        ]),
        other => Err(bad(
            line,
            "mode",
            &format!("expected dependent, independent, or both, got `{other}`"),
        )),
    }
}

fn parse_path_loss(line: usize, value: &str) -> Result<PathLossKind, ConfigError> {
    match value {
        "bounded" => Ok(PathLossKind::Bounded),
        "singular" => Ok(PathLossKind::Singular),
        other => Err(bad(
            line,
            "path_loss",
            &format!("expected bounded or singular, got `{other}`"),
        )),
    }
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    value
        .parse::<f64>()
        .map_err(|_| bad(line, key, &format!("expected a number, got `{value}`")))
}

fn parse_f64_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(|item| {
            let item = item.trim();
            if item.is_empty() {
                Err(bad(line, key, "empty list item"))
            } else {
                parse_f64(line, key, item)
            }
        })
        .collect()
}

fn parse_int<T: std::str::FromStr>(
    line: usize,
    key: &str,
    value: &str,
) -> Result<T, ConfigError> {
    value
        .parse::<T>()
        .map_err(|_| bad(line, key, &format!("expected an integer, got `{value}`")))
}

/// Integer grids: a comma list, or the inclusive range `a..b`.
fn parse_u32_list(
    line: usize,
    key: &str,
    value: &str,
    min: u32,
) -> Result<Vec<u32>, ConfigError> {
    let values: Vec<u32> = if let Some((start, end)) = value.split_once("..") {
        let start: u32 = parse_int(line, key, start.trim())?;
        let end: u32 = parse_int(line, key, end.trim())?;
        if start > end {
            return Err(bad(line, key, &format!("range {start}..{end} runs backwards")));
        }
        (start..=end).collect()
    } else {
        value
            .split(',')
            .map(|item| {
                let item = item.trim();
                if item.is_empty() {
                    Err(bad(line, key, "empty list item"))
                } else {
                    parse_int(line, key, item)
                }
            })
            .collect::<Result<_, _>>()?
    };
    if values.iter().any(|v| *v < min) {
        return Err(bad(line, key, &format!("every value must be >= {min}")));
    }
    Ok(values)
}

/// Cross-key constraints: grids the experiment's CSV schema cannot
/// represent must be single-valued, and a few experiments pin the mode.
fn check_shape(
    cfg: &ExperimentConfig,
    key_lines: &HashMap<&str, usize>,
) -> Result<(), ConfigError> {
    let single = |key: &str, len: usize| -> Result<(), ConfigError> {
        if len == 1 {
            return Ok(());
        }
        let message = format!(
            "experiment `{}` has no CSV column for a `{key}` grid; give exactly one value",
            cfg.experiment
        );
        Err(match key_lines.get(key) {
            Some(&line) => ConfigError::BadValue {
                line,
                key: key.to_string(),
                message,
            },
            None => ConfigError::Constraint(message),
        })
    };
    match cfg.experiment {
        ExperimentKind::MeanVsHops
        | ExperimentKind::VarVsHopsFixedSpan
        | ExperimentKind::VarVsHopsFixedHop => {
            single("transmit_prob", cfg.transmit_probs.len())?;
        }
        ExperimentKind::CovVsDistance => {
            single("transmit_prob", cfg.transmit_probs.len())?;
            single("hop_length", cfg.hop_lengths.len())?;
            if cfg.modes.as_slice() != [InterferenceMode::Dependent] {
                return Err(ConfigError::Constraint(
                    "cov_vs_distance is a dependent-mode quantity (the independent-mode \
                     covariance is identically zero); leave `mode` unset or set \
                     `mode = dependent`"
                        .to_string(),
                ));
            }
        }
        ExperimentKind::SpeedVsHopLength => {}
        ExperimentKind::Pmf => {
            single("transmit_prob", cfg.transmit_probs.len())?;
            single("intensity", cfg.intensities.len())?;
            single("hops", cfg.hops.len())?;
            single("hop_length", cfg.hop_lengths.len())?;
            if cfg.modes.len() != 1 {
                return Err(ConfigError::Constraint(
                    "pmf writes one table per file; set `mode = dependent` or \
                     `mode = independent`"
                        .to_string(),
                ));
            }
            let hops = cfg.hops[0];
            if cfg.t_max < hops {
                return Err(ConfigError::Constraint(format!(
                    "t_max = {} is below the hop count {hops}; a packet cannot cross \
                     {hops} hops in fewer than {hops} slots",
                    cfg.t_max
                )));
            }
        }
        ExperimentKind::Validate => {
            single("hops", cfg.hops.len())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip_echo(echo: &str) -> String {
        echo.lines()
            .map(|line| line.strip_prefix("# ").expect("echo lines start with `# `"))
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn minimal_config_is_the_published_default_grid() {
        let cfg = parse_config("experiment = mean_vs_N\n", None).unwrap();
        assert_eq!(cfg, ExperimentConfig::defaults(ExperimentKind::MeanVsHops));
        assert_eq!(cfg.hops, (1..=20).collect::<Vec<_>>());
        assert_eq!(cfg.intensities, vec![0.25, 0.75, 1.0, 2.0]);
        assert_eq!(cfg.transmit_probs, vec![1.0]);
        assert_eq!(cfg.modes.len(), 2);
    }

    #[test]
    fn echo_round_trips_every_experiment() {
        for kind in [
            ExperimentKind::MeanVsHops,
            ExperimentKind::VarVsHopsFixedSpan,
            ExperimentKind::VarVsHopsFixedHop,
            ExperimentKind::CovVsDistance,
            ExperimentKind::SpeedVsHopLength,
            ExperimentKind::Pmf,
            ExperimentKind::Validate,
        ] {
            let cfg = ExperimentConfig::defaults(kind);
            let back = parse_config(&strip_echo(&cfg.echo()), None).unwrap();
            assert_eq!(back, cfg, "echo of `{kind}` defaults failed to round-trip");
        }
    }

    #[test]
    fn echo_round_trips_overridden_values() {
        let text = "experiment = speed_vs_L\n\
                    mode = dependent\n\
                    path_loss = singular\n\
                    alpha = 3.5\n\
                    sir_threshold = 0.37\n\
                    transmit_prob = 0.1, 0.9\n\
                    intensity = 0.125\n\
                    hop_length = 0.5, 2.5\n\
                    seed = 7\n\
                    rel_tol = 1e-6\n\
                    out = speeds.csv\n";
        let cfg = parse_config(text, None).unwrap();
        let back = parse_config(&strip_echo(&cfg.echo()), None).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.out.as_deref(), Some(Path::new("speeds.csv")));
    }

    #[test]
    fn range_sugar_and_comments_parse() {
        let text = "# fixed-span sweep, trimmed\n\
                    experiment = var_vs_N_fixed_span\n\
                    hops = 2..5   # inclusive\n\
                    intensity = 1\n";
        let cfg = parse_config(text, None).unwrap();
        assert_eq!(cfg.hops, vec![2, 3, 4, 5]);
        assert_eq!(cfg.intensities, vec![1.0]);
    }

    #[test]
    fn errors_cite_the_offending_line() {
        let text = "experiment = mean_vs_N\n\nbogus_key = 3\n";
        let err = parse_config(text, None).unwrap_err().to_string();
        assert!(err.contains("line 3"), "got: {err}");
        assert!(err.contains("bogus_key"), "got: {err}");

        let text = "experiment = mean_vs_N\ntransmit_prob = 1.5\n";
        let err = parse_config(text, None).unwrap_err().to_string();
        assert!(err.contains("line 2"), "got: {err}");
        assert!(err.contains("[0, 1]"), "got: {err}");

        let text = "experiment = mean_vs_N\nalpha = two\n";
        let err = parse_config(text, None).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("`two`"), "got: {err}");

        let text = "experiment = mean_vs_N\nt_max = 12\n";
        let err = parse_config(text, None).unwrap_err().to_string();
        assert!(err.contains("no effect"), "got: {err}");

        let text = "experiment = mean_vs_N\nseed = 1\nseed = 2\n";
        let err = parse_config(text, None).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("duplicate"), "got: {err}");
    }

    #[test]
    fn grids_without_a_column_are_rejected() {
        let text = "experiment = mean_vs_N\ntransmit_prob = 0.5, 1\n";
        let err = parse_config(text, None).unwrap_err().to_string();
        assert!(err.contains("no CSV column"), "got: {err}");

        let text = "experiment = pmf\nmode = both\n";
        let err = parse_config(text, None).unwrap_err().to_string();
        assert!(err.contains("one table per file"), "got: {err}");

        let text = "experiment = cov_vs_distance\nmode = independent\n";
        let err = parse_config(text, None).unwrap_err().to_string();
        assert!(err.contains("dependent-mode"), "got: {err}");
    }

    #[test]
    fn verbs_imply_and_pin_the_experiment() {
        let cfg = parse_config("trials = 5000\n", Some(ExperimentKind::Validate)).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Validate);
        assert_eq!(cfg.trials, 5000);

        let err = parse_config(
            "experiment = mean_vs_N\n",
            Some(ExperimentKind::Validate),
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("expects `validate`"), "got: {err}");

        assert!(matches!(
            parse_config("seed = 3\n", None),
            Err(ConfigError::MissingExperiment)
        ));
    }

    #[test]
    fn pmf_horizon_must_cover_the_chain() {
        let text = "experiment = pmf\nhops = 3\nhop_length = 0.3\nt_max = 2\n";
        let err = parse_config(text, None).unwrap_err().to_string();
        assert!(err.contains("below the hop count"), "got: {err}");
    }
}
