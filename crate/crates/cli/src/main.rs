//! `ccgnav` command-line front end.
//!
//! Exit codes: 0 success, 1 the run completed but was unsafe (violations or
//! fallbacks) or coverage missed its band, 2 the config did not parse or
//! validate, 3 the run aborted.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ccgnav::sim::{coverage_trial, run_scenario, ConfigError, RunMetrics, ScenarioConfig, SimError};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

const LOG_ENV: &str = "CCGNAV_LOG";

#[derive(Parser)]
#[command(name = "ccgnav", version, about = "Safe navigation around an estimated moving obstacle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trajectory and metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Trajectory format; both are written when omitted.
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Parse and validate a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a scenario for each value of one parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `dotted.key=lo:hi` for evenly spaced values, or
        /// `dotted.key=v1,v2,...`.
        #[arg(long)]
        param: String,
        #[arg(long)]
        runs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo check of the confidence-set coverage.
    CoverageTest {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    /// Completed but unsafe, or coverage outside its band.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => CliError::Config(c.to_string()),
            SimError::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// SHA-256 of the config with the seed cleared, so that reseeded runs of one
/// scenario share a hash.
fn config_hash(cfg: &ScenarioConfig) -> String {
    let mut unseeded = cfg.clone();
    unseeded.seed = 0;
    let json = serde_json::to_vec(&unseeded).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

#[derive(Serialize)]
struct MetricsFile<'a> {
    config_hash: String,
    seed: u64,
    #[serde(flatten)]
    metrics: &'a RunMetrics,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_error(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}

/// Prints to stdout, ignoring a closed pipe.
fn say(text: &str) {
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn unsafe_summary(m: &RunMetrics) -> Option<String> {
    (m.violations > 0 || m.fallback_steps > 0)
        .then(|| format!("{} violating steps, {} fallback steps", m.violations, m.fallback_steps))
}

fn run(config: &Path, out: &Path, seed: Option<u64>, format: Option<Format>) -> Result<(), CliError> {
    let mut cfg = ScenarioConfig::from_path(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let log = run_scenario(&cfg)?;
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    if !matches!(format, Some(Format::Json)) {
        let path = out.join("trajectory.csv");
        let file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
        log.write_csv(std::io::BufWriter::new(file))?;
    }
    if !matches!(format, Some(Format::Csv)) {
        let path = out.join("trajectory.json");
        fs::write(&path, log.to_json()?).map_err(|e| io_error(&path, e))?;
    }
    let metrics = MetricsFile {
        config_hash: config_hash(&cfg),
        seed: cfg.seed,
        metrics: &log.metrics,
    };
    write_json(&out.join("metrics.json"), &metrics)?;
    say(&serde_json::to_string_pretty(&metrics).expect("metrics serialize"));
    match unsafe_summary(&log.metrics) {
        Some(s) => Err(CliError::Failed(s)),
        None => Ok(()),
    }
}

/// Values for a sweep parameter.
fn sweep_values(spec: &str, runs: usize) -> Result<(String, Vec<f64>), CliError> {
    let bad = |m: &str| CliError::Config(format!("--param {spec}: {m}"));
    let (key, range) = spec.split_once('=').ok_or_else(|| bad("expected key=range"))?;
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("`{s}` is not a number")));
    let values = if let Some((lo, hi)) = range.split_once(':') {
        let (lo, hi) = (num(lo)?, num(hi)?);
        match runs {
            0 => return Err(bad("needs at least one run")),
            1 => vec![lo],
            n => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        }
    } else {
        let listed = range.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
        if listed.len() != runs {
            return Err(bad(&format!("{} values for {runs} runs", listed.len())));
        }
        listed
    };
    Ok((key.trim().to_string(), values))
}

/// Sets `key` (dotted path) in the config and revalidates.
fn with_param(cfg: &ScenarioConfig, key: &str, value: f64) -> Result<ScenarioConfig, CliError> {
    let mut json = serde_json::to_value(cfg).expect("config serializes");
    let mut slot = &mut json;
    for part in key.split('.') {
        slot = slot
            .get_mut(part)
            .ok_or_else(|| CliError::Config(format!("--param: unknown key `{key}`")))?;
    }
    *slot = match slot {
        serde_json::Value::Number(n) if n.is_u64() || n.is_i64() => {
            if value.fract() != 0.0 {
                return Err(CliError::Config(format!("--param: `{key}` takes integers, got {value}")));
            }
            serde_json::json!(value as i64)
        }
        serde_json::Value::Number(_) => serde_json::json!(value),
        _ => return Err(CliError::Config(format!("--param: `{key}` is not a number"))),
    };
    let cfg: ScenarioConfig =
        serde_json::from_value(json).map_err(|e| CliError::Config(format!("--param {key}: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct SweepRow {
    run: usize,
    value: f64,
    dir: String,
    config_hash: String,
    error: Option<String>,
    metrics: Option<RunMetrics>,
}

fn sweep(config: &Path, param: &str, runs: usize, out: &Path) -> Result<(), CliError> {
    let base = ScenarioConfig::from_path(config)?;
    let (key, values) = sweep_values(param, runs)?;
    let configs = values
        .iter()
        .map(|v| with_param(&base, &key, *v))
        .collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let rows: Vec<SweepRow> = configs
        .par_iter()
        .zip(values.par_iter())
        .enumerate()
        .map(|(i, (cfg, value))| {
            let name = format!("run_{i:04}");
            let dir = out.join(&name);
            let outcome = fs::create_dir_all(&dir)
                .map_err(|e| io_error(&dir, e))
                .and_then(|_| {
                    fs::write(dir.join("config.toml"), cfg.to_toml()).map_err(|e| io_error(&dir, e))?;
                    let log = run_scenario(cfg)?;
                    let path = dir.join("trajectory.csv");
                    let file = fs::File::create(&path).map_err(|e| io_error(&path, e))?;
                    log.write_csv(std::io::BufWriter::new(file))?;
                    write_json(&dir.join("metrics.json"), &log.metrics)?;
                    Ok(log.metrics)
                });
            SweepRow {
                run: i,
                value: *value,
                dir: name,
                config_hash: config_hash(cfg),
                error: outcome.as_ref().err().map(|e| e.to_string()),
                metrics: outcome.ok(),
            }
        })
        .collect();
    write_json(&out.join("sweep.json"), &rows)?;
    for r in &rows {
        match (&r.metrics, &r.error) {
            (Some(m), _) => say(&format!(
                "{} {key}={} min_separation={:.4} violations={} fallbacks={}",
                r.dir, r.value, m.min_separation, m.violations, m.fallback_steps
            )),
            (None, Some(e)) => say(&format!("{} {key}={} aborted: {e}", r.dir, r.value)),
            (None, None) => unreachable!("a run has metrics or an error"),
        }
    }
    let aborted = rows.iter().filter(|r| r.error.is_some()).count();
    let unsafe_runs = rows.iter().filter_map(|r| r.metrics.as_ref()).filter(|m| unsafe_summary(m).is_some()).count();
    if aborted > 0 {
        Err(CliError::Runtime(format!("{aborted} of {runs} runs aborted")))
    } else if unsafe_runs > 0 {
        Err(CliError::Failed(format!("{unsafe_runs} of {runs} runs unsafe")))
    } else {
        Ok(())
    }
}

fn coverage(config: &Path, runs: Option<usize>) -> Result<(), CliError> {
    let cfg = ScenarioConfig::from_path(config)?;
    let report = coverage_trial(&cfg, runs.unwrap_or(cfg.coverage.runs))?;
    say(&serde_json::to_string_pretty(&report).expect("report serializes"));
    if report.degenerate {
        say("noise-free data: the fit reproduces the truth and the ellipsoid is a point");
    }
    if report.pass {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "coverage {:.4} outside {:.4} ± {}",
            report.frequency, report.target, report.band
        )))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            out,
            seed,
            format,
        } => run(config, out, *seed, *format),
        Command::Validate { config } => ScenarioConfig::from_path(config)
            .map(|_| say(&format!("{}: ok", config.display())))
            .map_err(CliError::from),
        Command::Sweep {
            config,
            param,
            runs,
            out,
        } => sweep(config, param, *runs, out),
        Command::CoverageTest { config, runs } => coverage(config, *runs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_ranges_and_lists() {
        let (k, v) = sweep_values("barrier.gamma=10:30", 3).unwrap();
        assert_eq!(k, "barrier.gamma");
        assert_eq!(v, vec![10.0, 20.0, 30.0]);
        assert_eq!(sweep_values("a=1,2.5", 2).unwrap().1, vec![1.0, 2.5]);
        assert!(sweep_values("a=1,2", 3).is_err());
        assert!(sweep_values("a", 1).is_err());
        assert!(sweep_values("a=x:1", 2).is_err());
    }

    #[test]
    fn integer_fields_reject_fractions() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example1.toml");
        let cfg = ScenarioConfig::from_path(&path).unwrap();
        assert_eq!(with_param(&cfg, "seed", 5.0).unwrap().seed, 5);
        assert!(matches!(with_param(&cfg, "seed", 5.5), Err(CliError::Config(_))));
        assert_eq!(config_hash(&cfg), config_hash(&with_param(&cfg, "seed", 5.0).unwrap()));
        assert_ne!(config_hash(&cfg), config_hash(&with_param(&cfg, "horizon", 60.0).unwrap()));
    }
}
