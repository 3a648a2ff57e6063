use std::path::PathBuf;

use serde::Serialize;

use super::config::{digest, file_digest};
use super::manifest::{manifest_path, ManifestBuilder};
use super::{emit, CliError, EvalArgs};
use crate::design::{read_panel_csv_path, DeterministicSpec, TargetSelector};
use crate::evaluation::{rolling_evaluation, EvalConfig, EvalReport, FitOptions, TuneMethod};
use crate::models::{EstimatorKind, ModelSettings};
use crate::solver::GridSpec;
use crate::tuning::WindowScheme;

#[derive(Debug, Clone, Serialize)]
struct EvalRunConfig {
    data: PathBuf,
    target: String,
    lags: usize,
    det: DeterministicSpec,
    k_delta: f64,
    k_pi: f64,
    tune: TuneMethod,
    window_fraction: f64,
    scheme: WindowScheme,
    estimators: Vec<EstimatorKind>,
    baseline: EstimatorKind,
    tune_once: bool,
    seed: u64,
    n_lambda_i: usize,
    eps_ratio: f64,
}

fn parse_scheme(s: &str) -> Result<WindowScheme, CliError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "rolling" => Ok(WindowScheme::Rolling),
        "expanding" => Ok(WindowScheme::Expanding),
        other => Err(CliError::Usage(format!("unknown scheme '{other}' (expected rolling or expanding)"))),
    }
}

impl EvalRunConfig {
    fn from_args(a: &EvalArgs) -> Result<Self, CliError> {
        let grid = GridSpec::default();
        let weights = ModelSettings::default().weights;
        Ok(Self {
            data: a.data.clone().ok_or_else(|| CliError::Usage("--data is required".into()))?,
            target: a.target.clone().unwrap_or_else(|| "0".into()),
            lags: a.lags.unwrap_or(1),
            det: DeterministicSpec::parse(a.det.as_deref().unwrap_or("const"))?,
            k_delta: a.k_delta.unwrap_or(weights.k_delta),
            k_pi: a.k_pi.unwrap_or(weights.k_pi),
            tune: TuneMethod::parse(a.tune.as_deref().unwrap_or("bic"))?,
            window_fraction: a.window_fraction.unwrap_or(2.0 / 3.0),
            scheme: parse_scheme(a.scheme.as_deref().unwrap_or("rolling"))?,
            estimators: EstimatorKind::parse_list(a.estimators.as_deref().unwrap_or("specs1,specs2,adl,adl-adf"))?,
            baseline: EstimatorKind::parse(a.baseline.as_deref().unwrap_or("adl"))?,
            tune_once: a.tune_once.unwrap_or(false),
            seed: a.seed.unwrap_or(1),
            n_lambda_i: a.n_lambda_i.unwrap_or(grid.n_lambda_i),
            eps_ratio: a.eps_ratio.unwrap_or(grid.eps_ratio),
        })
    }

    fn eval_config(&self) -> EvalConfig {
        let mut settings = ModelSettings::default();
        settings.weights.k_delta = self.k_delta;
        settings.weights.k_pi = self.k_pi;
        settings.grid.n_lambda_i = self.n_lambda_i;
        settings.grid.eps_ratio = self.eps_ratio;
        EvalConfig {
            fit: FitOptions { p: self.lags, deterministic: self.det, tune: self.tune, settings, ..FitOptions::default() },
            window_fraction: self.window_fraction,
            scheme: self.scheme,
            estimators: self.estimators.clone(),
            baseline: self.baseline,
            tune_once: self.tune_once,
        }
    }
}

#[derive(Debug, Serialize)]
struct EvalOutput {
    command: &'static str,
    version: &'static str,
    config_digest: String,
    manifest: Option<String>,
    #[serde(flatten)]
    report: EvalReport,
}

pub(super) fn run(args: EvalArgs) -> Result<(), CliError> {
    let cfg = EvalRunConfig::from_args(&args)?;
    let mut mb = ManifestBuilder::start("nowcast-eval");
    let panel = read_panel_csv_path(&cfg.data, &TargetSelector::parse(&cfg.target))?;
    mb.stage("read");
    let report = rolling_evaluation(&panel, &cfg.eval_config())?;
    mb.stage("evaluate");
    let config_digest = digest(&cfg);
    let out = EvalOutput {
        command: "nowcast-eval",
        version: env!("CARGO_PKG_VERSION"),
        config_digest: config_digest.clone(),
        manifest: args
            .out
            .as_ref()
            .and_then(|o| manifest_path(o).file_name().map(|s| s.to_string_lossy().into_owned())),
        report,
    };
    let manifest = mb.finish(
        config_digest,
        serde_json::to_value(&cfg).expect("config serializes"),
        Some(file_digest(&cfg.data)?),
        vec![cfg.seed],
        args.out.iter().cloned().collect(),
    );
    eprintln!(
        "{} nowcast origins, window of {} rows",
        out.report.n_origins, out.report.window_rows
    );
    for s in &out.report.summaries {
        eprintln!(
            "{:<10} msne {:>12.6}  ratio {:>7.4}  dm {:>9}  p {:>7}",
            s.estimator.name(),
            s.msne,
            s.msne_ratio,
            s.dm_statistic.map_or("-".into(), |v| format!("{v:.3}")),
            s.dm_p_value.map_or("-".into(), |v| format!("{v:.4}")),
        );
    }
    emit(&out, args.out.as_ref(), manifest)
}
