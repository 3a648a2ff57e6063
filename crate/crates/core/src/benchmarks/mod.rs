//! Comparator estimators and test statistics.

mod adf;
mod adl_adf;
mod dm;
mod wald;

use nalgebra::DVector;

use crate::design::{recover_theta, CecmDesign};
use crate::error::{Result, SpecsError};
use crate::linalg;
use crate::solver::SpecsSolution;

pub use adf::{adf_critical_value, adf_test, schwert_max_lags, AdfResult};
pub use adl_adf::{adl_adf_fit, AdlAdfFit};
pub use dm::{dm_test, DmResult, DM_SENTINEL};
pub use wald::{wald_coint_stat, wald_critical_value, wald_test, WaldResult};

/// Least squares of the projected response on the given columns, zeros elsewhere.
pub fn ols_fit(design: &CecmDesign, subset: &[usize]) -> Result<DVector<f64>> {
    let k = design.n_coef();
    let mut cols = subset.to_vec();
    cols.sort_unstable();
    cols.dedup();
    if let Some(&bad) = cols.iter().find(|&&c| c >= k) {
        return Err(SpecsError::InvalidInput(format!("column {bad} out of range ({k} columns)")));
    }
    let mut gamma = DVector::zeros(k);
    if cols.is_empty() {
        return Ok(gamma);
    }
    if cols.len() + design.d.ncols() > design.n_obs() {
        return Err(SpecsError::InsufficientRows {
            needed: cols.len() + design.d.ncols(),
            available: design.n_obs(),
        });
    }
    let x = design.v_proj.select_columns(&cols);
    let beta = linalg::ols_qr(&x, &design.dy_proj)?;
    for (c, b) in cols.iter().zip(beta.iter()) {
        gamma[*c] = *b;
    }
    Ok(gamma)
}

/// [`ols_fit`] packaged as an unpenalized solution so it can be nowcast.
pub fn ols_solution(design: &CecmDesign, subset: &[usize]) -> Result<SpecsSolution> {
    let gamma = ols_fit(design, subset)?;
    let rss = (&design.dy_proj - &design.v_proj * &gamma).norm_squared();
    let n = design.n_levels;
    Ok(SpecsSolution {
        theta: recover_theta(design, &gamma)?,
        active_delta: (0..n).filter(|&i| gamma[i] != 0.0).collect(),
        active_pi: (n..gamma.len()).filter(|&i| gamma[i] != 0.0).map(|i| i - n).collect(),
        gamma: gamma.iter().copied().collect(),
        n_levels: n,
        lambda_i: 0.0,
        lambda_g: 0.0,
        objective: rss,
        rss,
        iterations: 0,
        converged: true,
        kkt_residual: 0.0,
    })
}
