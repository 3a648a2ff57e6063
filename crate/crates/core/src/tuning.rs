//! Penalty selection by BIC or by time-series cross-validation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{build_cecm_design, DeterministicSpec, TimeSeriesPanel};
use crate::error::{Result, SpecsError};
use crate::models::{model_grid, model_weights, EstimatorKind, ModelSettings};
use crate::nowcast::nowcast_at;
use crate::solver::{specs_path, PenaltyGrid, SpecsSolution};

/// `ln(RSS/T) + ln(T)·df/T`.
pub fn bic_score(rss: f64, df: usize, t_eff: usize) -> f64 {
    let t = t_eff as f64;
    (rss.max(f64::MIN_POSITIVE) / t).ln() + t.ln() * df as f64 / t
}

/// Index of the BIC-optimal solution and all scores. Ties go to the larger
/// `λ_I`, then the larger `λ_G`.
pub fn bic_select_index(path: &[SpecsSolution], t_eff: usize) -> Result<(usize, Vec<f64>)> {
    if path.is_empty() {
        return Err(SpecsError::InvalidInput("empty solution path".into()));
    }
    let scores: Vec<f64> = path.iter().map(|s| bic_score(s.rss, s.df(), t_eff)).collect();
    let lambdas: Vec<(f64, f64)> = path.iter().map(|s| (s.lambda_i, s.lambda_g)).collect();
    Ok((argmin_sparse_ties(&scores, &lambdas), scores))
}

pub fn bic_select(path: &[SpecsSolution], t_eff: usize) -> Result<SpecsSolution> {
    let (idx, _) = bic_select_index(path, t_eff)?;
    Ok(path[idx].clone())
}

fn argmin_sparse_ties(scores: &[f64], lambdas: &[(f64, f64)]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        let better = scores[i] < scores[best]
            || (scores[i] == scores[best]
                && (lambdas[i].0 > lambdas[best].0
                    || (lambdas[i].0 == lambdas[best].0 && lambdas[i].1 > lambdas[best].1)));
        if better {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowScheme {
    #[default]
    Expanding,
    Rolling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TscvConfig {
    pub initial_fraction: f64,
    pub scheme: WindowScheme,
}

impl Default for TscvConfig {
    fn default() -> Self {
        Self {
            initial_fraction: 2.0 / 3.0,
            scheme: WindowScheme::Expanding,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TscvOutcome {
    pub lambda_i: f64,
    pub lambda_g: f64,
    /// Position of the chosen pair in path order.
    pub index: usize,
    pub mspe: Vec<f64>,
    pub grid: PenaltyGrid,
    pub n_splits: usize,
}

/// Cross-validate over a grid built on the initial window.
///
/// `grid_fn` receives the initial window. `nowcast_fn` receives a window whose
/// last row is the target; it must fit on the other rows only and return the
/// predicted `Δy` of the target row for every grid pair in path order.
pub fn tscv_over<G, F>(panel: &TimeSeriesPanel, cfg: &TscvConfig, min_rows: usize, grid_fn: G, nowcast_fn: F) -> Result<TscvOutcome>
where
    G: Fn(&TimeSeriesPanel) -> Result<PenaltyGrid>,
    F: Fn(&TimeSeriesPanel, &PenaltyGrid) -> Result<Vec<f64>> + Sync,
{
    if !(cfg.initial_fraction > 0.0 && cfg.initial_fraction < 1.0) {
        return Err(SpecsError::InvalidInput("initial_fraction must lie in (0, 1)".into()));
    }
    let t = panel.n_obs();
    let n0 = (cfg.initial_fraction * t as f64).ceil() as usize;
    if n0 < min_rows {
        return Err(SpecsError::InsufficientRows { needed: min_rows, available: n0 });
    }
    if n0 >= t {
        return Err(SpecsError::InvalidInput("no observations left for validation".into()));
    }
    let grid = grid_fn(&panel.window(0, n0)?)?;
    let splits: Vec<usize> = (n0..t).collect();
    let preds: Vec<Vec<f64>> = splits
        .par_iter()
        .map(|&s| {
            let start = match cfg.scheme {
                WindowScheme::Expanding => 0,
                WindowScheme::Rolling => s - n0,
            };
            let window = panel.window(start, s - start + 1)?;
            nowcast_fn(&window, &grid).map_err(|e| SpecsError::AtSplit { split: s, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let pairs = grid.pairs();
    let mut mspe = vec![0.0; pairs.len()];
    for (&s, pred) in splits.iter().zip(&preds) {
        if pred.len() != pairs.len() {
            return Err(SpecsError::DimensionMismatch("nowcast count differs from grid size".into()));
        }
        let realized = panel.z(s, 0) - panel.z(s - 1, 0);
        for (m, p) in mspe.iter_mut().zip(pred) {
            *m += (realized - p).powi(2);
        }
    }
    for m in mspe.iter_mut() {
        *m /= splits.len() as f64;
    }
    let index = argmin_sparse_ties(&mspe, &pairs);
    Ok(TscvOutcome {
        lambda_i: pairs[index].0,
        lambda_g: pairs[index].1,
        index,
        mspe,
        grid,
        n_splits: splits.len(),
    })
}

/// Cross-validated penalty pair for a CECM-form estimator. Weights are
/// re-estimated inside every training window.
pub fn tscv_select(
    panel: &TimeSeriesPanel,
    p: usize,
    det: DeterministicSpec,
    kind: EstimatorKind,
    settings: &ModelSettings,
    cfg: &TscvConfig,
) -> Result<TscvOutcome> {
    let n = panel.n_series();
    let min_rows = n * (p + 2) - 1 + det.ncols() + 5;
    tscv_over(
        panel,
        cfg,
        min_rows,
        |initial| {
            let design = build_cecm_design(initial, p, det)?;
            let weights = model_weights(&design, kind, &settings.weights)?;
            model_grid(&design, &weights, kind, &settings.grid)
        },
        |window, grid| {
            let train = window.window(0, window.n_obs() - 1)?;
            let design = build_cecm_design(&train, p, det)?;
            let weights = model_weights(&design, kind, &settings.weights)?;
            let path = specs_path(&design, &weights, grid, &settings.solver)?;
            path.iter()
                .map(|sol| nowcast_at(window, sol, p, det, window.n_obs() - 1, 0).map(|nc| nc.delta))
                .collect()
        },
    )
}
