use std::path::PathBuf;

use serde::Serialize;

use super::config::{digest, file_digest};
use super::manifest::ManifestBuilder;
use super::{emit, parse_on_off, CliError, FitArgs};
use crate::benchmarks::{wald_test, WaldResult};
use crate::design::{build_cecm_design, read_panel_csv_path, DeterministicSpec, TargetSelector};
use crate::evaluation::{fit_tuned, FitOptions, TuneMethod};
use crate::models::{EstimatorKind, ModelSettings};
use crate::solver::GridSpec;

#[derive(Debug, Clone, Serialize)]
pub(super) struct FitConfig {
    pub data: PathBuf,
    pub target: String,
    pub lags: usize,
    pub det: DeterministicSpec,
    pub k_delta: f64,
    pub k_pi: f64,
    pub tune: TuneMethod,
    pub lambda_g: bool,
    pub seed: u64,
    pub wald_draws: usize,
    pub n_lambda_i: usize,
    pub eps_ratio: f64,
}

impl FitConfig {
    fn from_args(a: &FitArgs) -> Result<Self, CliError> {
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
            lambda_g: parse_on_off(a.lambda_g.as_deref().unwrap_or("on"))?,
            seed: a.seed.unwrap_or(1),
            wald_draws: a.wald_draws.unwrap_or(0),
            n_lambda_i: a.n_lambda_i.unwrap_or(grid.n_lambda_i),
            eps_ratio: a.eps_ratio.unwrap_or(grid.eps_ratio),
        })
    }

    pub fn fit_options(&self) -> FitOptions {
        let mut settings = ModelSettings::default();
        settings.weights.k_delta = self.k_delta;
        settings.weights.k_pi = self.k_pi;
        settings.grid.n_lambda_i = self.n_lambda_i;
        settings.grid.eps_ratio = self.eps_ratio;
        FitOptions { p: self.lags, deterministic: self.det, tune: self.tune, settings, ..FitOptions::default() }
    }
}

#[derive(Debug, Serialize)]
struct Coefficient {
    label: String,
    value: f64,
}

#[derive(Debug, Serialize)]
struct FitReport {
    command: &'static str,
    version: &'static str,
    config_digest: String,
    manifest: Option<String>,
    estimator: EstimatorKind,
    target: String,
    n_obs: usize,
    t_eff: usize,
    lags: usize,
    deterministic: DeterministicSpec,
    tune: TuneMethod,
    lambda_i: f64,
    lambda_g: f64,
    /// BIC of the chosen point or its cross-validated MSPE.
    score: f64,
    scores: Vec<f64>,
    level_coefficients: Vec<Coefficient>,
    short_run_coefficients: Vec<Coefficient>,
    deterministic_coefficients: Vec<Coefficient>,
    active_levels: Vec<String>,
    active_short_run: Vec<String>,
    df: usize,
    rss: f64,
    converged: bool,
    iterations: usize,
    kkt_residual: f64,
    n_unconverged_path_points: usize,
    wald: Option<WaldResult>,
}

pub(super) fn run(args: FitArgs) -> Result<(), CliError> {
    let cfg = FitConfig::from_args(&args)?;
    let mut mb = ManifestBuilder::start("fit");
    let panel = read_panel_csv_path(&cfg.data, &TargetSelector::parse(&cfg.target))?;
    mb.stage("read");
    let kind = if cfg.lambda_g { EstimatorKind::Specs2 } else { EstimatorKind::Specs1 };
    let fit = fit_tuned(&panel, kind, &cfg.fit_options())?;
    mb.stage("fit");
    let design = build_cecm_design(&panel, cfg.lags, cfg.det)?;
    let wald = if cfg.wald_draws > 0 { Some(wald_test(&design, None, cfg.wald_draws, cfg.seed)?) } else { None };
    mb.stage("wald");

    let sol = &fit.solution;
    let labels = &fit.column_labels;
    let coef = |range: std::ops::Range<usize>| -> Vec<Coefficient> {
        range.map(|i| Coefficient { label: labels[i].clone(), value: sol.gamma[i] }).collect()
    };
    let det_labels = ["const", "trend"];
    let config_digest = digest(&cfg);
    let manifest_name = args
        .out
        .as_ref()
        .and_then(|o| super::manifest::manifest_path(o).file_name().map(|s| s.to_string_lossy().into_owned()));
    let report = FitReport {
        command: "fit",
        version: env!("CARGO_PKG_VERSION"),
        config_digest: config_digest.clone(),
        manifest: manifest_name,
        estimator: kind,
        target: panel.labels()[panel.target_index()].clone(),
        n_obs: panel.n_obs(),
        t_eff: design.n_obs(),
        lags: cfg.lags,
        deterministic: cfg.det,
        tune: cfg.tune,
        lambda_i: sol.lambda_i,
        lambda_g: sol.lambda_g,
        score: fit.score,
        scores: fit.scores.clone(),
        level_coefficients: coef(0..sol.n_levels),
        short_run_coefficients: coef(sol.n_levels..sol.gamma.len()),
        deterministic_coefficients: sol
            .theta
            .iter()
            .zip(det_labels)
            .map(|(&value, l)| Coefficient { label: l.into(), value })
            .collect(),
        active_levels: sol.active_delta.iter().map(|&i| labels[i].clone()).collect(),
        active_short_run: sol.active_pi.iter().map(|&j| labels[j + sol.n_levels].clone()).collect(),
        df: sol.df(),
        rss: sol.rss,
        converged: sol.converged,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
        n_unconverged_path_points: fit.n_unconverged,
        wald,
    };
    let manifest = mb.finish(
        config_digest,
        serde_json::to_value(&cfg).expect("config serializes"),
        Some(file_digest(&cfg.data)?),
        vec![cfg.seed],
        args.out.iter().cloned().collect(),
    );
    emit(&report, args.out.as_ref(), manifest)?;
    if !sol.converged {
        return Err(CliError::Numerical(format!(
            "selected solution did not converge: {} iterations, KKT residual {:.3e}, lambda_i {:.4e}, lambda_g {:.4e}",
            sol.iterations, sol.kkt_residual, sol.lambda_i, sol.lambda_g
        )));
    }
    Ok(())
}
