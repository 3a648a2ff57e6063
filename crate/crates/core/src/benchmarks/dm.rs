use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, SpecsError};

/// Statistic reported when the loss differential is a nonzero constant.
pub const DM_SENTINEL: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DmResult {
    /// Positive when `errors_a` has the larger squared-error loss.
    pub statistic: f64,
    pub p_value: f64,
    pub mean_loss_differential: f64,
}

/// One-step Diebold-Mariano comparison of squared-error losses.
pub fn dm_test(errors_a: &[f64], errors_b: &[f64]) -> Result<DmResult> {
    if errors_a.len() != errors_b.len() {
        return Err(SpecsError::DimensionMismatch(format!(
            "{} vs {} forecast errors",
            errors_a.len(),
            errors_b.len()
        )));
    }
    let n = errors_a.len();
    if n < 10 {
        return Err(SpecsError::InsufficientRows { needed: 10, available: n });
    }
    if errors_a.iter().chain(errors_b).any(|e| !e.is_finite()) {
        return Err(SpecsError::InvalidInput("forecast errors must be finite".into()));
    }
    let d: Vec<f64> = errors_a.iter().zip(errors_b).map(|(a, b)| a * a - b * b).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let gamma0 = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let scale = d.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if gamma0 <= (f64::EPSILON * scale).powi(2) {
        return Ok(if mean == 0.0 || mean.abs() <= f64::EPSILON * scale {
            DmResult { statistic: 0.0, p_value: 1.0, mean_loss_differential: mean }
        } else {
            DmResult { statistic: DM_SENTINEL.copysign(mean), p_value: 0.0, mean_loss_differential: mean }
        });
    }
    let statistic = mean / (gamma0 / n as f64).sqrt();
    let normal = Normal::standard();
    let p_value = (2.0 * normal.sf(statistic.abs())).min(1.0);
    Ok(DmResult { statistic, p_value, mean_loss_differential: mean })
}
