//! One-step nowcasts that use the contemporaneous `Δx` of the target period.

use serde::Serialize;

use crate::design::{regressor_row, CecmDesign, DeterministicSpec, TimeSeriesPanel};
use crate::error::{Result, SpecsError};
use crate::solver::SpecsSolution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Nowcast {
    pub level: f64,
    pub delta: f64,
}

/// Nowcast of `y_a` from a CECM-form solution fitted on a window starting at
/// panel row `window_start`. The deterministic trend is indexed relative to it.
pub fn nowcast_at(
    panel: &TimeSeriesPanel,
    solution: &SpecsSolution,
    p: usize,
    det: DeterministicSpec,
    a: usize,
    window_start: usize,
) -> Result<Nowcast> {
    if a >= panel.n_obs() {
        return Err(SpecsError::InvalidInput(format!(
            "target row {a} is beyond the panel ({} rows); contemporaneous x is missing",
            panel.n_obs()
        )));
    }
    if a < window_start + p + 1 {
        return Err(SpecsError::InvalidInput(format!("target row {a} has too few lags")));
    }
    let row = regressor_row(panel, a, p);
    if row.len() != solution.gamma.len() {
        return Err(SpecsError::DimensionMismatch(format!(
            "solution has {} coefficients, regressor row has {}",
            solution.gamma.len(),
            row.len()
        )));
    }
    let mut delta: f64 = row.iter().zip(&solution.gamma).map(|(v, g)| v * g).sum();
    let d = det.row(a - window_start);
    if solution.theta.len() != d.len() {
        return Err(SpecsError::DimensionMismatch(format!(
            "solution has {} deterministic coefficients, specification has {}",
            solution.theta.len(),
            d.len()
        )));
    }
    delta += d.iter().zip(&solution.theta).map(|(x, t)| x * t).sum::<f64>();
    Ok(Nowcast {
        level: panel.z(a - 1, 0) + delta,
        delta,
    })
}

/// Nowcast of the last panel row from a solution fitted on all earlier rows.
pub fn nowcast_one(design: &CecmDesign, solution: &SpecsSolution, panel: &TimeSeriesPanel) -> Result<Nowcast> {
    let t = panel.n_obs();
    if design.n_obs() + design.p + 2 != t {
        return Err(SpecsError::DimensionMismatch(format!(
            "design has {} rows; expected a fit on the first {} of {t} panel rows",
            design.n_obs(),
            t - 1
        )));
    }
    nowcast_at(panel, solution, design.p, design.deterministic, t - 1, 0)
}
