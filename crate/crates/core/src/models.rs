//! Estimator configurations shared by tuning, benchmarks, simulation and the CLI.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::design::CecmDesign;
use crate::error::{Result, SpecsError};
use crate::solver::{
    build_grid, compute_weights, initial_estimate, specs_path, AdaptiveWeights, GridSpec, InitialEstimator,
    PenaltyGrid, SolverConfig, SpecsSolution,
};
use crate::tuning::bic_select_index;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Individual penalty only.
    Specs1,
    /// Individual and group penalty.
    Specs2,
    /// Lagged levels excluded.
    Adl,
    /// ADL on series differenced only when a unit-root test fails to reject.
    AdlAdf,
    /// Least squares on the true support (simulation only).
    OlsOracle,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Specs1,
        EstimatorKind::Specs2,
        EstimatorKind::Adl,
        EstimatorKind::AdlAdf,
        EstimatorKind::OlsOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Specs1 => "specs1",
            EstimatorKind::Specs2 => "specs2",
            EstimatorKind::Adl => "adl",
            EstimatorKind::AdlAdf => "adl-adf",
            EstimatorKind::OlsOracle => "ols-oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                SpecsError::InvalidInput(format!(
                    "unknown estimator '{s}' (expected one of {})",
                    Self::ALL.map(|k| k.name()).join(", ")
                ))
            })
    }

    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let k = Self::parse(part)?;
            if !out.contains(&k) {
                out.push(k);
            }
        }
        if out.is_empty() {
            return Err(SpecsError::InvalidInput("empty estimator list".into()));
        }
        Ok(out)
    }

    pub fn uses_group_penalty(self) -> bool {
        self == EstimatorKind::Specs2
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub initial: InitialEstimator,
    pub k_delta: f64,
    pub k_pi: f64,
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self {
            initial: InitialEstimator::RidgeGcv,
            k_delta: 2.0,
            k_pi: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct ModelSettings {
    pub weights: WeightSpec,
    pub grid: GridSpec,
    pub solver: SolverConfig,
}

/// The design restricted to its short-run block.
pub fn short_run_design(design: &CecmDesign) -> Result<CecmDesign> {
    let n = design.n_levels;
    let k = design.n_short_run();
    let mut out = design.clone();
    out.v = design.v.columns(n, k).into_owned();
    out.v_proj = design.v_proj.columns(n, k).into_owned();
    out.n_levels = 0;
    out.column_labels = design.column_labels[n..].to_vec();
    Ok(out)
}

/// Adaptive weights for a penalized estimator. The ADL pins every lagged level
/// and takes its initial estimate from the short-run block alone.
pub fn model_weights(design: &CecmDesign, kind: EstimatorKind, spec: &WeightSpec) -> Result<AdaptiveWeights> {
    match kind {
        EstimatorKind::Specs1 | EstimatorKind::Specs2 => {
            let init = initial_estimate(design, spec.initial)?;
            compute_weights(init.as_slice(), spec.k_delta, spec.k_pi, design.n_levels)
        }
        EstimatorKind::Adl => {
            let sr = short_run_design(design)?;
            let init = initial_estimate(&sr, spec.initial)?;
            let pi = compute_weights(init.as_slice(), spec.k_delta, spec.k_pi, 0)?;
            let mut omega = vec![f64::INFINITY; design.n_levels];
            omega.extend(pi.omega);
            Ok(AdaptiveWeights {
                omega,
                k_delta: spec.k_delta,
                k_pi: spec.k_pi,
            })
        }
        other => Err(SpecsError::InvalidInput(format!("{other} is not a penalized CECM estimator"))),
    }
}

pub fn model_grid(
    design: &CecmDesign,
    weights: &AdaptiveWeights,
    kind: EstimatorKind,
    spec: &GridSpec,
) -> Result<PenaltyGrid> {
    let spec = if kind.uses_group_penalty() { *spec } else { spec.individual() };
    build_grid(design, weights, &spec)
}

#[derive(Debug, Clone, Serialize)]
pub struct FittedModel {
    pub kind: EstimatorKind,
    pub solution: SpecsSolution,
    pub weights: AdaptiveWeights,
    pub grid: PenaltyGrid,
    pub bic: f64,
    pub bic_scores: Vec<f64>,
    /// Path points that hit the iteration limit.
    pub n_unconverged: usize,
}

/// Fit the full penalty path and keep the BIC-optimal point.
pub fn fit_bic(design: &CecmDesign, kind: EstimatorKind, settings: &ModelSettings) -> Result<FittedModel> {
    let weights = model_weights(design, kind, &settings.weights)?;
    let grid = model_grid(design, &weights, kind, &settings.grid)?;
    let path = specs_path(design, &weights, &grid, &settings.solver)?;
    let (idx, scores) = bic_select_index(&path, design.n_obs())?;
    let n_unconverged = path.iter().filter(|s| !s.converged).count();
    Ok(FittedModel {
        kind,
        bic: scores[idx],
        bic_scores: scores,
        solution: path.into_iter().nth(idx).expect("index from the same path"),
        weights,
        grid,
        n_unconverged,
    })
}
