use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::design::DeterministicSpec;
use crate::error::{Result, SpecsError};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub lags_used: usize,
    pub critical_value: f64,
    /// Rejection of a unit root at 5%.
    pub reject_unit_root: bool,
    pub n_obs: usize,
}

/// `⌊12 (T/100)^{1/4}⌋`.
pub fn schwert_max_lags(t: usize) -> usize {
    (12.0 * (t as f64 / 100.0).powf(0.25)).floor() as usize
}

/// 5% critical value of the ADF t-statistic from MacKinnon's response surface.
pub fn adf_critical_value(det: DeterministicSpec, n: usize) -> f64 {
    let b = match det {
        DeterministicSpec::None => [-1.94100, -0.2686, -3.365, 31.223],
        DeterministicSpec::Constant => [-2.86154, -2.8903, -4.234, -40.040],
        DeterministicSpec::ConstantAndTrend => [-3.41004, -4.3904, -9.036, -45.374],
    };
    let inv = 1.0 / n as f64;
    b[0] + b[1] * inv + b[2] * inv * inv + b[3] * inv * inv * inv
}

/// Regression of `Δu_t` on deterministics, `u_{t-1}` and `k` lagged
/// differences over rows `t = first..len`.
fn adf_regression(u: &[f64], k: usize, first: usize, det: DeterministicSpec) -> (DMatrix<f64>, DVector<f64>) {
    let rows = u.len() - first;
    let d = det.ncols();
    let x = DMatrix::from_fn(rows, d + 1 + k, |r, c| {
        let t = first + r;
        if c < d {
            det.row(t)[c]
        } else if c == d {
            u[t - 1]
        } else {
            let j = c - d;
            u[t - j] - u[t - j - 1]
        }
    });
    let y = DVector::from_fn(rows, |r, _| u[first + r] - u[first + r - 1]);
    (x, y)
}

/// Augmented Dickey-Fuller test with BIC lag choice up to `max_lags`
/// (Schwert's rule when `None`).
pub fn adf_test(series: &[f64], max_lags: Option<usize>, det: DeterministicSpec) -> Result<AdfResult> {
    let t = series.len();
    let kmax = max_lags.unwrap_or_else(|| schwert_max_lags(t));
    if t <= kmax + 10 {
        return Err(SpecsError::InsufficientRows { needed: kmax + 10, available: t });
    }
    if let Some(i) = series.iter().position(|x| !x.is_finite()) {
        return Err(SpecsError::NonFinite { row: i, col: 0 });
    }
    let mean = series.iter().sum::<f64>() / t as f64;
    let scale = series.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let var = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / t as f64;
    if var <= (1e-12 * scale.max(f64::MIN_POSITIVE)).powi(2) {
        return Err(SpecsError::Degenerate("series has zero variance".into()));
    }
    if series.windows(2).all(|w| w[1] == w[0] + (series[1] - series[0])) {
        return Err(SpecsError::Degenerate("series is an exact linear trend".into()));
    }

    // Lag choice on the common sample t = kmax+1..T-1.
    let first = kmax + 1;
    let n = (t - first) as f64;
    let mut best = (f64::INFINITY, 0);
    for k in 0..=kmax {
        let (x, y) = adf_regression(series, k, first, det);
        let Ok(beta) = linalg::ols_qr(&x, &y) else { continue };
        let rss = (&y - &x * beta).norm_squared().max(f64::MIN_POSITIVE);
        let bic = (rss / n).ln() + n.ln() * x.ncols() as f64 / n;
        if bic < best.0 {
            best = (bic, k);
        }
    }
    if !best.0.is_finite() {
        return Err(SpecsError::Singular("every ADF lag order is collinear".into()));
    }
    let k = best.1;
    let (x, y) = adf_regression(series, k, k + 1, det);
    let (beta, se, _) = linalg::ols_with_se(&x, &y)?;
    let j = det.ncols();
    if !(se[j] > 0.0) {
        return Err(SpecsError::Degenerate("ADF regression fits exactly".into()));
    }
    let statistic = beta[j] / se[j];
    let n_obs = y.len();
    let critical_value = adf_critical_value(det, n_obs);
    Ok(AdfResult {
        statistic,
        lags_used: k,
        critical_value,
        reject_unit_root: statistic < critical_value,
        n_obs,
    })
}
