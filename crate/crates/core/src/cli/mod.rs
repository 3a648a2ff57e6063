//! Command-line interface: `fit`, `nowcast-eval` and `simulate`.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numerical failure.

pub mod config;
mod eval;
mod fit;
pub mod manifest;
mod simulate;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::SpecsError;
use config::impl_overlay;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<SpecsError> for CliError {
    fn from(e: SpecsError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "specs", version, about = "Penalized single-equation error-correction models for nowcasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a penalized error-correction model to a CSV panel.
    Fit(FitArgs),
    /// Rolling pseudo out-of-sample nowcast comparison.
    NowcastEval(EvalArgs),
    /// Seeded Monte Carlo study on a simulated design.
    Simulate(SimulateArgs),
    /// Write one simulated panel as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "table2_low_we")]
    pub family: String,
    #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
    pub a: f64,
    #[arg(long, default_value_t = 100)]
    pub t: usize,
    #[arg(long, default_value = "low")]
    pub persistence: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Flags of `specs fit`; each has a config-file key of the same name.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FitArgs {
    /// Flat TOML file with defaults for any of the flags below.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// CSV panel: header row, one column per series, optional leading date column.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Target column by header name or zero-based position (default 0).
    #[arg(long)]
    pub target: Option<String>,
    /// Number of lagged differences p (default 1).
    #[arg(long)]
    pub lags: Option<usize>,
    /// Deterministic terms: none, const or trend (default const).
    #[arg(long)]
    pub det: Option<String>,
    /// Weight exponent for lagged levels (default 2).
    #[arg(long)]
    pub k_delta: Option<f64>,
    /// Weight exponent for short-run coefficients (default 1).
    #[arg(long)]
    pub k_pi: Option<f64>,
    /// Penalty selection: bic or tscv (default bic).
    #[arg(long)]
    pub tune: Option<String>,
    /// Group penalty on lagged levels: on or off (default on).
    #[arg(long)]
    pub lambda_g: Option<String>,
    /// Seed for simulated Wald critical values (default 1).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Null draws for a Wald test on the unpenalized fit; 0 disables (default 0).
    #[arg(long)]
    pub wald_draws: Option<usize>,
    /// Number of individual penalty values (default 100).
    #[arg(long)]
    pub n_lambda_i: Option<usize>,
    /// Smallest individual penalty relative to the largest (default 1e-4).
    #[arg(long)]
    pub eps_ratio: Option<f64>,
    /// Output JSON path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl_overlay!(FitArgs { config, data, target, lags, det, k_delta, k_pi, tune, lambda_g, seed, wald_draws, n_lambda_i, eps_ratio, out });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub lags: Option<usize>,
    #[arg(long)]
    pub det: Option<String>,
    #[arg(long)]
    pub k_delta: Option<f64>,
    #[arg(long)]
    pub k_pi: Option<f64>,
    #[arg(long)]
    pub tune: Option<String>,
    /// Share of the effective sample in the first estimation window (default 2/3).
    #[arg(long)]
    pub window_fraction: Option<f64>,
    /// rolling or expanding (default rolling).
    #[arg(long)]
    pub scheme: Option<String>,
    /// Comma-separated: specs1, specs2, adl, adl-adf.
    #[arg(long)]
    pub estimators: Option<String>,
    /// Estimator in the denominator of MSNE ratios (default adl).
    #[arg(long)]
    pub baseline: Option<String>,
    /// Freeze penalties at their first-window choice.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub tune_once: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_lambda_i: Option<usize>,
    #[arg(long)]
    pub eps_ratio: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl_overlay!(EvalArgs {
    config, data, target, lags, det, k_delta, k_pi, tune, window_fraction, scheme, estimators, baseline, tune_once,
    seed, n_lambda_i, eps_ratio, out
});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateArgs {
    /// Experiment configuration (flat TOML).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Design family (default table2_low_we).
    #[arg(long)]
    pub family: Option<String>,
    /// Adjustment multiplier in [-0.5, 0] (default -0.5).
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// Sample size (default 100).
    #[arg(long)]
    pub t: Option<usize>,
    /// low or high (default low).
    #[arg(long)]
    pub persistence: Option<String>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Lagged differences in the fitted model (default 1).
    #[arg(long)]
    pub lags: Option<usize>,
    /// Deterministic terms of the fitted model (default trend).
    #[arg(long)]
    pub det: Option<String>,
    /// Factor autoregressive coefficient (factor_model only, default 1).
    #[arg(long, allow_hyphen_values = true)]
    pub phi: Option<f64>,
    /// ARMA dynamics in the factor model.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub dynamics: Option<bool>,
    /// Comma-separated estimators (default specs1,adl plus the baseline).
    #[arg(long)]
    pub estimators: Option<String>,
    #[arg(long)]
    pub k_delta: Option<f64>,
    #[arg(long)]
    pub k_pi: Option<f64>,
    #[arg(long)]
    pub n_lambda_i: Option<usize>,
    #[arg(long)]
    pub eps_ratio: Option<f64>,
    /// Wald tests on every replication.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub wald: Option<bool>,
    #[arg(long)]
    pub wald_draws: Option<usize>,
    /// Replications (default 100).
    #[arg(long)]
    pub reps: Option<usize>,
    /// Base seed; replication r uses seed + r (default 1).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Include per-replication records in the report (default true).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub keep_reps: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl_overlay!(SimulateArgs {
    config, family, a, t, persistence, burn_in, lags, det, phi, dynamics, estimators, k_delta, k_pi, n_lambda_i,
    eps_ratio, wald, wald_draws, reps, seed, jobs, keep_reps, out
});

/// Merge a config file, if named, under the command-line values.
fn resolve<T: config::Overlay + serde::de::DeserializeOwned>(cli: T, path: Option<&PathBuf>) -> Result<T, CliError> {
    match path {
        Some(p) => Ok(cli.overlay(config::load_flat(p)?)),
        None => Ok(cli),
    }
}

/// Cap the global pool from `SPECS_NUM_THREADS`.
fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("SPECS_NUM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("SPECS_NUM_THREADS must be a positive integer, got '{v}'")))?;
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = init_threads().and_then(|_| match cli.command {
        Command::Fit(a) => {
            let path = a.config.clone();
            resolve(a, path.as_ref()).and_then(fit::run)
        }
        Command::NowcastEval(a) => {
            let path = a.config.clone();
            resolve(a, path.as_ref()).and_then(eval::run)
        }
        Command::Simulate(a) => {
            let path = a.config.clone();
            resolve(a, path.as_ref()).and_then(simulate::run)
        }
        Command::Generate(a) => simulate::generate(a),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn parse_on_off(s: &str) -> Result<bool, CliError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" => Ok(true),
        "off" | "false" | "no" => Ok(false),
        other => Err(CliError::Usage(format!("expected on or off, got '{other}'"))),
    }
}

/// Write the report and its manifest, or print both when no path is given.
fn emit<R: Serialize>(report: &R, out: Option<&PathBuf>, manifest: manifest::RunManifest) -> Result<(), CliError> {
    match out {
        Some(path) => {
            manifest::write_json(path, report)?;
            manifest::write_json(&manifest::manifest_path(path), &manifest)
        }
        None => {
            println!("{}", serde_json::to_string_pretty(report).expect("report serializes"));
            eprintln!("{}", serde_json::to_string(&manifest).expect("manifest serializes"));
            Ok(())
        }
    }
}
