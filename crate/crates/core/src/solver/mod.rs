//! Penalized estimation of the single-equation error-correction model.
//!
//! The objective is `‖dy − Vγ‖² + λ_I Σ ω_i |γ_i| + λ_G ‖δ‖₂` with `δ` the
//! lagged-level block at the front of `γ`. It is minimized by accelerated
//! proximal gradient on the Gram matrix `V'V`, followed by an active-set
//! Newton refinement once the support has settled.

mod fista;
mod kkt;
mod path;
mod ridge;
mod weights;

use serde::Serialize;

pub use fista::{specs_fit, GramProblem, PreparedProblem, RawFit};
pub use kkt::kkt_residual;
pub use path::specs_path;
pub use ridge::{initial_estimate, ridge_fit, ridge_gcv_lambda, InitialEstimator};
pub use weights::{build_grid, compute_weights, lambda_max_i, AdaptiveWeights, GridSpec, PenaltyGrid};

#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Relative objective decrease below which iteration stops once KKT holds.
    pub tolerance: f64,
    /// KKT residual target, relative to `2‖V'dy‖_∞`.
    pub kkt_tolerance: f64,
    pub acceleration: bool,
    /// Rescale variables (per coordinate for the short-run block, one common
    /// factor for the level block) before iterating. The objective is unchanged.
    pub precondition: bool,
    /// Penalize coefficients of unit-norm columns instead of raw coefficients.
    pub standardize: bool,
    /// Solve the smooth system on the settled support once signs stop changing.
    pub polish: bool,
    pub power_iterations: usize,
    pub power_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            tolerance: 1e-8,
            kkt_tolerance: 1e-7,
            acceleration: true,
            precondition: true,
            standardize: false,
            polish: true,
            power_iterations: 50,
            power_tolerance: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        if !(self.tolerance > 0.0) || !(self.kkt_tolerance > 0.0) {
            return Err(crate::error::SpecsError::InvalidInput(
                "solver tolerances must be positive".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(crate::error::SpecsError::InvalidInput(
                "max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpecsSolution {
    pub gamma: Vec<f64>,
    pub n_levels: usize,
    /// Deterministic coefficients (constant, trend) recovered after the fit.
    pub theta: Vec<f64>,
    pub lambda_i: f64,
    pub lambda_g: f64,
    pub objective: f64,
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest KKT violation relative to `2‖V'dy‖_∞`.
    pub kkt_residual: f64,
    pub active_delta: Vec<usize>,
    pub active_pi: Vec<usize>,
}

impl SpecsSolution {
    pub fn delta(&self) -> &[f64] {
        &self.gamma[..self.n_levels]
    }

    pub fn pi(&self) -> &[f64] {
        &self.gamma[self.n_levels..]
    }

    /// Number of nonzero coefficients.
    pub fn df(&self) -> usize {
        self.active_delta.len() + self.active_pi.len()
    }

    pub fn has_levels(&self) -> bool {
        !self.active_delta.is_empty()
    }

    /// Support of γ as indices into the full coefficient vector.
    pub fn support(&self) -> Vec<usize> {
        self.active_delta
            .iter()
            .copied()
            .chain(self.active_pi.iter().map(|&j| j + self.n_levels))
            .collect()
    }
}

#[cfg(test)]
mod tests;
