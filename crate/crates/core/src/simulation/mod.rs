//! Data-generating processes, selection metrics and seeded Monte Carlo studies.

mod dgp;
mod monte_carlo;

use serde::Serialize;

use crate::design::ImpliedSingleEq;
use crate::error::{Result, SpecsError};
use crate::solver::SpecsSolution;

pub use crate::nowcast::nowcast_one;
pub use dgp::{
    chang_covariance, chang_covariance_with, companion_radius, gen_factor, gen_vecm, simulate_vecm,
    toeplitz_covariance, vecm_params, DgpFamily, DgpSpec, FactorParams, Persistence, EXPLOSIVE_TOL,
};
pub use monte_carlo::{
    run_monte_carlo, EstimatorSummary, McConfig, MetricsReport, RepFailure, RepOutcome, WaldSummary,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionMetrics {
    /// Absent when the truth has no nonzero coefficient.
    pub pcs: Option<f64>,
    /// Absent when the truth has no zero coefficient.
    pub pics: Option<f64>,
}

/// Proportions of correctly and incorrectly selected coefficients over γ.
pub fn selection_metrics(solution: &SpecsSolution, truth: &ImpliedSingleEq) -> Result<SelectionMetrics> {
    let k = truth.delta.len() + truth.pi.len();
    if solution.gamma.len() != k || solution.n_levels != truth.delta.len() {
        return Err(SpecsError::DimensionMismatch(format!(
            "solution has {} coefficients ({} levels), truth has {k} ({} levels)",
            solution.gamma.len(),
            solution.n_levels,
            truth.delta.len()
        )));
    }
    let mut is_true = vec![false; k];
    for i in truth.support() {
        is_true[i] = true;
    }
    let n_true = is_true.iter().filter(|&&b| b).count();
    let n_zero = k - n_true;
    let (mut hit, mut false_hit) = (0usize, 0usize);
    for i in solution.support() {
        if is_true[i] {
            hit += 1;
        } else {
            false_hit += 1;
        }
    }
    Ok(SelectionMetrics {
        pcs: (n_true > 0).then(|| hit as f64 / n_true as f64),
        pics: (n_zero > 0).then(|| false_hit as f64 / n_zero as f64),
    })
}

/// Fraction of solutions with at least one active lagged level.
pub fn pseudo_power(solutions: &[SpecsSolution]) -> Result<f64> {
    if solutions.is_empty() {
        return Err(SpecsError::InvalidInput("no solutions".into()));
    }
    Ok(solutions.iter().filter(|s| s.has_levels()).count() as f64 / solutions.len() as f64)
}
