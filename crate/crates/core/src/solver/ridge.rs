use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::design::CecmDesign;
use crate::error::{Result, SpecsError};
use crate::linalg;

/// How the initial estimate behind the adaptive weights is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind", content = "lambda")]
pub enum InitialEstimator {
    Ols,
    Ridge(f64),
    /// Ridge with the penalty chosen by generalized cross-validation.
    #[default]
    RidgeGcv,
}

/// `(V'MV + λ_R I)^{-1} V'M dy` by Cholesky.
pub fn ridge_fit(design: &CecmDesign, lambda_r: f64) -> Result<DVector<f64>> {
    if !(lambda_r >= 0.0) || !lambda_r.is_finite() {
        return Err(SpecsError::InvalidInput(format!("ridge penalty {lambda_r} must be finite and nonnegative")));
    }
    let k = design.n_coef();
    if lambda_r == 0.0 && k >= design.n_obs() {
        return Err(SpecsError::Singular(format!(
            "unpenalized fit with {k} coefficients and {} observations",
            design.n_obs()
        )));
    }
    let vt = design.v_proj.transpose();
    let mut gram = &vt * &design.v_proj;
    for i in 0..k {
        gram[(i, i)] += lambda_r;
    }
    let rhs = &vt * &design.dy_proj;
    linalg::spd_solve(&gram, &rhs)
}

/// Penalty minimizing the generalized cross-validation criterion
/// `n·RSS(λ) / (n − df(λ))²` over a log grid spanning the Gram spectrum.
pub fn ridge_gcv_lambda(design: &CecmDesign) -> Result<f64> {
    let n = design.n_obs() as f64;
    let vt = design.v_proj.transpose();
    let gram = &vt * &design.v_proj;
    let b = &vt * &design.dy_proj;
    let yy = design.dy_proj.norm_squared();
    let eig = SymmetricEigen::new(gram.clone());
    let c = eig.eigenvectors.transpose() * &b;
    let e: Vec<f64> = eig.eigenvalues.iter().map(|&x| x.max(0.0)).collect();
    let top = e.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return Err(SpecsError::Degenerate("regressors are identically zero".into()));
    }
    let criterion = |lam: f64| -> f64 {
        let mut rss = yy;
        let mut df = 0.0;
        for (ej, cj) in e.iter().zip(c.iter()) {
            let den = ej + lam;
            rss -= cj * cj * (ej + 2.0 * lam) / (den * den);
            df += ej / den;
        }
        let resid = n - df;
        if resid <= 0.0 {
            return f64::INFINITY;
        }
        n * rss.max(0.0) / (resid * resid)
    };
    let (lo, hi) = ((top * 1e-10).ln(), (top * 10.0).ln());
    let n_grid = 200;
    let mut best = (f64::INFINITY, top);
    for k in 0..=n_grid {
        let lam = (lo + (hi - lo) * k as f64 / n_grid as f64).exp();
        let g = criterion(lam);
        if g < best.0 {
            best = (g, lam);
        }
    }
    Ok(best.1)
}

/// Initial coefficient estimate for weight construction.
pub fn initial_estimate(design: &CecmDesign, estimator: InitialEstimator) -> Result<DVector<f64>> {
    match estimator {
        InitialEstimator::Ols => linalg::ols_qr(&design.v_proj, &design.dy_proj),
        InitialEstimator::Ridge(lam) => ridge_fit(design, lam),
        InitialEstimator::RidgeGcv => ridge_fit(design, ridge_gcv_lambda(design)?),
    }
}

/// Dense reference used by tests: `(X'X + λI)^{-1} X'y` through an explicit eigen-solve.
#[cfg(test)]
pub(crate) fn ridge_reference(x: &nalgebra::DMatrix<f64>, y: &DVector<f64>, lam: f64) -> DVector<f64> {
    let g = x.transpose() * x + nalgebra::DMatrix::identity(x.ncols(), x.ncols()) * lam;
    g.lu().solve(&(x.transpose() * y)).unwrap()
}
