use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::adf::{adf_test, AdfResult};
use crate::design::{CecmDesign, DeterministicSpec, TimeSeriesPanel};
use crate::error::{Result, SpecsError};
use crate::models::WeightSpec;
use crate::nowcast::Nowcast;
use crate::solver::{build_grid, compute_weights, initial_estimate, specs_path, GridSpec, SolverConfig, SpecsSolution};
use crate::tuning::bic_select_index;

#[derive(Debug, Clone, Serialize)]
pub struct AdlAdfFit {
    pub solution: SpecsSolution,
    /// Per series in target-first order: true when the series entered in differences.
    pub differenced: Vec<bool>,
    pub adf: Vec<AdfResult>,
    pub column_labels: Vec<String>,
    pub p: usize,
    pub deterministic: DeterministicSpec,
}

fn transformed(panel: &TimeSeriesPanel, diff: &[bool], t: usize, k: usize) -> f64 {
    if diff[k] {
        panel.z(t, k) - panel.z(t - 1, k)
    } else {
        panel.z(t, k)
    }
}

/// `(u_{x,a}, u_{a-1}, …, u_{a-p})` with `u` the per-series transformed panel.
fn transformed_row(panel: &TimeSeriesPanel, diff: &[bool], a: usize, p: usize) -> Vec<f64> {
    let n = panel.n_series();
    let mut row = Vec::with_capacity(n * (p + 1) - 1);
    row.extend((1..n).map(|k| transformed(panel, diff, a, k)));
    for j in 1..=p {
        row.extend((0..n).map(|k| transformed(panel, diff, a - j, k)));
    }
    row
}

fn transformed_labels(panel: &TimeSeriesPanel, diff: &[bool], p: usize) -> Vec<String> {
    let z = panel.z_labels();
    let name = |k: usize| if diff[k] { format!("D.{}", z[k]) } else { z[k].clone() };
    let mut out: Vec<String> = (1..z.len()).map(name).collect();
    for j in 1..=p {
        out.extend((0..z.len()).map(|k| format!("L{j}.{}", name(k))));
    }
    out
}

/// Penalized regression with each series in levels when a constant-only ADF
/// test rejects a unit root and in differences otherwise. Rows line up with
/// the error-correction design of the same panel; BIC picks the penalty.
pub fn adl_adf_fit(
    panel: &TimeSeriesPanel,
    p: usize,
    det: DeterministicSpec,
    weights_spec: &WeightSpec,
    grid_spec: &GridSpec,
    config: &SolverConfig,
) -> Result<AdlAdfFit> {
    let n = panel.n_series();
    let t = panel.n_obs();
    if t <= p + 1 + det.ncols() {
        return Err(SpecsError::InsufficientRows { needed: p + 1 + det.ncols(), available: t });
    }
    let adf: Vec<AdfResult> = (0..n)
        .map(|k| {
            let series: Vec<f64> = (0..t).map(|i| panel.z(i, k)).collect();
            adf_test(&series, None, DeterministicSpec::Constant)
        })
        .collect::<Result<_>>()?;
    let differenced: Vec<bool> = adf.iter().map(|r| !r.reject_unit_root).collect();

    let t_eff = t - p - 1;
    let k = n * (p + 1) - 1;
    let mut v = DMatrix::zeros(t_eff, k);
    let mut y = DVector::zeros(t_eff);
    for r in 0..t_eff {
        let a = r + p + 1;
        y[r] = transformed(panel, &differenced, a, 0);
        for (c, x) in transformed_row(panel, &differenced, a, p).into_iter().enumerate() {
            v[(r, c)] = x;
        }
    }
    let labels = transformed_labels(panel, &differenced, p);
    let design = CecmDesign::from_parts(y, v, det, p + 1, 0, labels.clone(), p, n)?;

    let init = initial_estimate(&design, weights_spec.initial)?;
    let weights = compute_weights(init.as_slice(), weights_spec.k_delta, weights_spec.k_pi, 0)?;
    let grid = build_grid(&design, &weights, &grid_spec.individual())?;
    let path = specs_path(&design, &weights, &grid, config)?;
    let (idx, _) = bic_select_index(&path, design.n_obs())?;
    Ok(AdlAdfFit {
        solution: path.into_iter().nth(idx).expect("index from the same path"),
        differenced,
        adf,
        column_labels: labels,
        p,
        deterministic: det,
    })
}

impl AdlAdfFit {
    /// Nowcast of `y_a` for a fit on the window starting at `window_start`.
    pub fn nowcast_at(&self, panel: &TimeSeriesPanel, a: usize, window_start: usize) -> Result<Nowcast> {
        if a >= panel.n_obs() {
            return Err(SpecsError::InvalidInput(format!(
                "target row {a} is beyond the panel ({} rows); contemporaneous x is missing",
                panel.n_obs()
            )));
        }
        if a < window_start + self.p + 1 {
            return Err(SpecsError::InvalidInput(format!("target row {a} has too few lags")));
        }
        if panel.n_series() != self.differenced.len() {
            return Err(SpecsError::DimensionMismatch("panel width differs from the fitted model".into()));
        }
        let row = transformed_row(panel, &self.differenced, a, self.p);
        let d = self.deterministic.row(a - window_start);
        let pred: f64 = row.iter().zip(&self.solution.gamma).map(|(x, g)| x * g).sum::<f64>()
            + d.iter().zip(&self.solution.theta).map(|(x, t)| x * t).sum::<f64>();
        let prev = panel.z(a - 1, 0);
        Ok(if self.differenced[0] {
            Nowcast { level: prev + pred, delta: pred }
        } else {
            Nowcast { level: pred, delta: pred - prev }
        })
    }

    /// Nowcast of the last panel row for a fit on all earlier rows.
    pub fn nowcast_last(&self, panel: &TimeSeriesPanel) -> Result<Nowcast> {
        self.nowcast_at(panel, panel.n_obs() - 1, 0)
    }
}
