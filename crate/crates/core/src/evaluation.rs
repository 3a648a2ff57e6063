//! Pseudo out-of-sample nowcast evaluation over rolling or expanding windows.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{adl_adf_fit, dm_test};
use crate::design::{build_cecm_design, DeterministicSpec, TimeSeriesPanel};
use crate::error::{Result, SpecsError};
use crate::models::{fit_bic, model_weights, EstimatorKind, ModelSettings};
use crate::nowcast::nowcast_at;
use crate::solver::{specs_path, PenaltyGrid, SpecsSolution};
use crate::tuning::{tscv_select, TscvConfig, WindowScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TuneMethod {
    #[default]
    Bic,
    Tscv,
}

impl TuneMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bic" => Ok(TuneMethod::Bic),
            "tscv" => Ok(TuneMethod::Tscv),
            other => Err(SpecsError::InvalidInput(format!("unknown tuning method '{other}' (expected bic or tscv)"))),
        }
    }
}

/// How one penalized model is fitted on one estimation window.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub p: usize,
    pub deterministic: DeterministicSpec,
    pub tune: TuneMethod,
    pub settings: ModelSettings,
    pub tscv: TscvConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            p: 1,
            deterministic: DeterministicSpec::Constant,
            tune: TuneMethod::Bic,
            settings: ModelSettings::default(),
            tscv: TscvConfig::default(),
        }
    }
}

/// A penalized CECM-form fit with the penalty pair that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct TunedFit {
    pub kind: EstimatorKind,
    pub solution: SpecsSolution,
    pub column_labels: Vec<String>,
    pub tune: TuneMethod,
    /// BIC of the chosen point, or the cross-validated MSPE.
    pub score: f64,
    /// BIC over the path, or MSPE over the validation grid.
    pub scores: Vec<f64>,
    pub n_unconverged: usize,
}

/// Fit at a single penalty pair; weights come from `panel` itself.
pub fn fit_at_pair(
    panel: &TimeSeriesPanel,
    kind: EstimatorKind,
    opts: &FitOptions,
    lambda_i: f64,
    lambda_g: f64,
) -> Result<SpecsSolution> {
    let design = build_cecm_design(panel, opts.p, opts.deterministic)?;
    let weights = model_weights(&design, kind, &opts.settings.weights)?;
    let grid = PenaltyGrid::new(vec![lambda_i], vec![lambda_g])?;
    let mut path = specs_path(&design, &weights, &grid, &opts.settings.solver)?;
    Ok(path.remove(0))
}

/// Fit a penalized CECM-form estimator on the whole panel with the chosen tuning.
pub fn fit_tuned(panel: &TimeSeriesPanel, kind: EstimatorKind, opts: &FitOptions) -> Result<TunedFit> {
    if !matches!(kind, EstimatorKind::Specs1 | EstimatorKind::Specs2 | EstimatorKind::Adl) {
        return Err(SpecsError::InvalidInput(format!("{kind} is not a penalized CECM estimator")));
    }
    let design = build_cecm_design(panel, opts.p, opts.deterministic)?;
    match opts.tune {
        TuneMethod::Bic => {
            let fit = fit_bic(&design, kind, &opts.settings)?;
            Ok(TunedFit {
                kind,
                solution: fit.solution,
                column_labels: design.column_labels,
                tune: opts.tune,
                score: fit.bic,
                scores: fit.bic_scores,
                n_unconverged: fit.n_unconverged,
            })
        }
        TuneMethod::Tscv => {
            let cv = tscv_select(panel, opts.p, opts.deterministic, kind, &opts.settings, &opts.tscv)?;
            let solution = fit_at_pair(panel, kind, opts, cv.lambda_i, cv.lambda_g)?;
            Ok(TunedFit {
                kind,
                n_unconverged: usize::from(!solution.converged),
                solution,
                column_labels: design.column_labels,
                tune: opts.tune,
                score: cv.mspe[cv.index],
                scores: cv.mspe,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub fit: FitOptions,
    pub window_fraction: f64,
    pub scheme: WindowScheme,
    pub estimators: Vec<EstimatorKind>,
    pub baseline: EstimatorKind,
    /// Freeze every estimator's penalty pair at its first-window choice.
    pub tune_once: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            fit: FitOptions::default(),
            window_fraction: 2.0 / 3.0,
            scheme: WindowScheme::Rolling,
            estimators: vec![EstimatorKind::Specs1, EstimatorKind::Specs2, EstimatorKind::Adl, EstimatorKind::AdlAdf],
            baseline: EstimatorKind::Adl,
            tune_once: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OriginRecord {
    /// Panel row being nowcast.
    pub target_row: usize,
    pub row_label: Option<String>,
    pub window_start: usize,
    pub actual: f64,
    /// One entry per estimator in report order.
    pub nowcasts: Vec<f64>,
    pub has_levels: Vec<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub estimator: EstimatorKind,
    pub msne: f64,
    pub msne_ratio: f64,
    /// Positive when the estimator loses to the baseline. Absent below 10 origins.
    pub dm_statistic: Option<f64>,
    pub dm_p_value: Option<f64>,
    pub level_selection_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub n_obs: usize,
    pub t_eff: usize,
    /// Effective (design) rows per estimation window.
    pub window_rows: usize,
    pub n_origins: usize,
    pub scheme: WindowScheme,
    pub tune: TuneMethod,
    pub tune_once: bool,
    pub lags: usize,
    pub deterministic: DeterministicSpec,
    pub estimators: Vec<EstimatorKind>,
    pub baseline: EstimatorKind,
    /// Penalty pairs frozen from the first window, per estimator, when `tune_once`.
    pub frozen_lambdas: Option<Vec<Option<(f64, f64)>>>,
    pub summaries: Vec<EvalSummary>,
    pub origins: Vec<OriginRecord>,
}

/// `(window_rows, n_origins)`: the window holds `⌈fraction·T_eff⌉` design rows
/// and every later design row is nowcast once.
pub fn origin_count(n_obs: usize, p: usize, fraction: f64) -> Result<(usize, usize)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(SpecsError::InvalidInput("window fraction must lie in (0, 1)".into()));
    }
    let t_eff = n_obs.checked_sub(p + 1).filter(|&t| t > 0).ok_or(SpecsError::InsufficientRows {
        needed: p + 1,
        available: n_obs,
    })?;
    let w = (fraction * t_eff as f64).ceil() as usize;
    if w >= t_eff {
        return Err(SpecsError::InvalidInput("window leaves no nowcast origins".into()));
    }
    Ok((w, t_eff - w))
}

fn fit_and_nowcast(
    window: &TimeSeriesPanel,
    kind: EstimatorKind,
    cfg: &EvalConfig,
    frozen: Option<(f64, f64)>,
) -> Result<(f64, bool)> {
    let train = window.window(0, window.n_obs() - 1)?;
    let a = window.n_obs() - 1;
    let opts = &cfg.fit;
    let solution = match (kind, frozen) {
        (EstimatorKind::AdlAdf, _) => {
            let fit = adl_adf_fit(
                &train,
                opts.p,
                opts.deterministic,
                &opts.settings.weights,
                &opts.settings.grid,
                &opts.settings.solver,
            )?;
            let has_levels = fit.differenced.iter().any(|d| !d);
            return Ok((fit.nowcast_at(window, a, 0)?.level, has_levels));
        }
        (EstimatorKind::OlsOracle, _) => {
            return Err(SpecsError::InvalidInput(
                "the oracle needs the true active set and is unavailable on observed data".into(),
            ))
        }
        (_, Some((li, lg))) => fit_at_pair(&train, kind, opts, li, lg)?,
        (_, None) => fit_tuned(&train, kind, opts)?.solution,
    };
    let nc = nowcast_at(window, &solution, opts.p, opts.deterministic, a, 0)?;
    Ok((nc.level, solution.has_levels()))
}

/// Nowcast every origin with every estimator and compare against the baseline.
pub fn rolling_evaluation(panel: &TimeSeriesPanel, cfg: &EvalConfig) -> Result<EvalReport> {
    if cfg.estimators.is_empty() {
        return Err(SpecsError::InvalidInput("no estimators requested".into()));
    }
    let p = cfg.fit.p;
    let (w, n_origins) = origin_count(panel.n_obs(), p, cfg.window_fraction)?;
    let min_rows = panel.n_series() * (p + 2) - 1 + cfg.fit.deterministic.ncols() + 1;
    if w < min_rows {
        return Err(SpecsError::InsufficientRows { needed: min_rows, available: w });
    }
    let mut estimators = cfg.estimators.clone();
    if !estimators.contains(&cfg.baseline) {
        estimators.push(cfg.baseline);
    }
    // panel rows per training window: w design rows plus p + 1 presample rows
    let train_len = w + p + 1;

    let frozen: Vec<Option<(f64, f64)>> = if cfg.tune_once {
        let first = panel.window(0, train_len)?;
        estimators
            .iter()
            .map(|&k| match k {
                EstimatorKind::Specs1 | EstimatorKind::Specs2 | EstimatorKind::Adl => {
                    fit_tuned(&first, k, &cfg.fit).map(|f| Some((f.solution.lambda_i, f.solution.lambda_g)))
                }
                _ => Ok(None),
            })
            .collect::<Result<_>>()?
    } else {
        vec![None; estimators.len()]
    };

    let origins: Vec<OriginRecord> = (0..n_origins)
        .into_par_iter()
        .map(|o| {
            let target_row = train_len + o;
            let start = match cfg.scheme {
                WindowScheme::Rolling => o,
                WindowScheme::Expanding => 0,
            };
            let window = panel.window(start, target_row - start + 1)?;
            let mut nowcasts = Vec::with_capacity(estimators.len());
            let mut has_levels = Vec::with_capacity(estimators.len());
            for (&k, &fz) in estimators.iter().zip(&frozen) {
                let (level, lv) = fit_and_nowcast(&window, k, cfg, fz)
                    .map_err(|e| SpecsError::AtSplit { split: target_row, source: Box::new(e) })?;
                nowcasts.push(level);
                has_levels.push(lv);
            }
            Ok(OriginRecord {
                target_row,
                row_label: panel.row_labels().map(|l| l[target_row].clone()),
                window_start: start,
                actual: panel.z(target_row, 0),
                nowcasts,
                has_levels,
            })
        })
        .collect::<Result<_>>()?;

    let errors: Vec<Vec<f64>> = (0..estimators.len())
        .map(|j| origins.iter().map(|r| r.actual - r.nowcasts[j]).collect())
        .collect();
    let msne: Vec<f64> = errors
        .iter()
        .map(|e| e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64)
        .collect();
    let b = estimators.iter().position(|&k| k == cfg.baseline).expect("baseline appended above");
    let summaries = estimators
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let dm = dm_test(&errors[j], &errors[b]).ok();
            Ok(EvalSummary {
                estimator: k,
                msne: msne[j],
                msne_ratio: if j == b { 1.0 } else { msne[j] / msne[b] },
                dm_statistic: dm.map(|d| d.statistic),
                dm_p_value: dm.map(|d| d.p_value),
                level_selection_rate: origins.iter().filter(|r| r.has_levels[j]).count() as f64 / n_origins as f64,
            })
        })
        .collect::<Result<_>>()?;

    Ok(EvalReport {
        n_obs: panel.n_obs(),
        t_eff: panel.n_obs() - p - 1,
        window_rows: w,
        n_origins,
        scheme: cfg.scheme,
        tune: cfg.fit.tune,
        tune_once: cfg.tune_once,
        lags: p,
        deterministic: cfg.fit.deterministic,
        estimators,
        baseline: cfg.baseline,
        frozen_lambdas: cfg.tune_once.then_some(frozen),
        summaries,
        origins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{gen_vecm, DgpFamily, DgpSpec};

    fn panel(t: usize, seed: u64) -> TimeSeriesPanel {
        let spec = DgpSpec::new(DgpFamily::Table2LowWe, -0.5, t);
        gen_vecm(&spec, seed).unwrap().0
    }

    #[test]
    fn origin_count_for_monthly_sample() {
        assert_eq!(origin_count(168, 3, 2.0 / 3.0).unwrap(), (110, 54));
        assert!(origin_count(10, 3, 0.99).is_err());
        assert!(origin_count(100, 1, 1.0).is_err());
    }

    #[test]
    fn baseline_against_itself_is_neutral() {
        let z = panel(90, 3);
        let cfg = EvalConfig {
            estimators: vec![EstimatorKind::Adl],
            window_fraction: 0.8,
            ..EvalConfig::default()
        };
        let r = rolling_evaluation(&z, &cfg).unwrap();
        assert_eq!(r.n_origins, 88 - 71);
        let s = &r.summaries[0];
        assert_eq!(s.msne_ratio, 1.0);
        assert_eq!(s.dm_statistic, Some(0.0));
        assert_eq!(s.dm_p_value, Some(1.0));
    }

    #[test]
    fn origins_walk_forward_one_row_at_a_time() {
        let z = panel(80, 4);
        let cfg = EvalConfig {
            estimators: vec![EstimatorKind::Specs1, EstimatorKind::AdlAdf],
            window_fraction: 0.85,
            ..EvalConfig::default()
        };
        let r = rolling_evaluation(&z, &cfg).unwrap();
        assert_eq!(r.estimators, vec![EstimatorKind::Specs1, EstimatorKind::AdlAdf, EstimatorKind::Adl]);
        for (i, o) in r.origins.iter().enumerate() {
            assert_eq!(o.target_row, r.window_rows + 2 + i);
            assert_eq!(o.window_start, i);
            assert_eq!(o.actual, z.z(o.target_row, 0));
            assert!(o.nowcasts.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn frozen_tuning_reuses_first_window_pair() {
        let z = panel(80, 5);
        let cfg = EvalConfig {
            estimators: vec![EstimatorKind::Specs2],
            window_fraction: 0.85,
            scheme: WindowScheme::Expanding,
            tune_once: true,
            ..EvalConfig::default()
        };
        let r = rolling_evaluation(&z, &cfg).unwrap();
        let frozen = r.frozen_lambdas.unwrap();
        assert!(frozen.iter().all(Option::is_some));
        assert!(r.origins.iter().all(|o| o.window_start == 0));
    }

    #[test]
    fn oracle_is_rejected_on_observed_data() {
        let z = panel(80, 6);
        let cfg = EvalConfig {
            estimators: vec![EstimatorKind::OlsOracle],
            ..EvalConfig::default()
        };
        assert!(rolling_evaluation(&z, &cfg).is_err());
    }

    #[test]
    fn tscv_fit_returns_grid_point() {
        let z = panel(100, 7);
        let opts = FitOptions { tune: TuneMethod::Tscv, ..FitOptions::default() };
        let fit = fit_tuned(&z, EstimatorKind::Specs1, &opts).unwrap();
        assert_eq!(fit.solution.lambda_g, 0.0);
        assert!(fit.scores.iter().all(|s| s.is_finite() && *s >= fit.score));
    }
}
