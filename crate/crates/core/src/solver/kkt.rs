use nalgebra::DVector;

use super::AdaptiveWeights;
use crate::design::CecmDesign;

/// Largest violation of the first-order conditions at `gamma`, divided by
/// `2‖V'dy‖_∞` (or 1 when that is zero).
///
/// With `g = 2V'(dy − Vγ)`:
/// active `i`: `|−g_i + λ_I ω_i sign(γ_i) + λ_G γ_i/‖δ‖|` (group term on levels only);
/// inactive free `i`: `max(0, |g_i| − λ_I ω_i)` (for levels while `δ ≠ 0`);
/// `δ = 0`: `max(0, ‖S(g_δ, λ_I ω_δ)‖₂ − λ_G)`.
pub fn kkt_residual(
    design: &CecmDesign,
    weights: &AdaptiveWeights,
    lambda_i: f64,
    lambda_g: f64,
    gamma: &[f64],
) -> f64 {
    let gamma = DVector::from_column_slice(gamma);
    let r = &design.dy_proj - &design.v_proj * &gamma;
    let g = 2.0 * design.v_proj.transpose() * r;
    let scale = 2.0 * (design.v_proj.transpose() * &design.dy_proj).amax();
    let scale = if scale > 0.0 { scale } else { 1.0 };
    residual_from_gradient(
        g.as_slice(),
        gamma.as_slice(),
        &weights.omega,
        lambda_i,
        lambda_g,
        design.n_levels,
    ) / scale
}

/// Absolute KKT violation given `g = 2V'r`; the first `n_levels` entries form the group.
pub(crate) fn residual_from_gradient(
    g: &[f64],
    gamma: &[f64],
    omega: &[f64],
    lambda_i: f64,
    lambda_g: f64,
    n_levels: usize,
) -> f64 {
    let delta_norm = gamma[..n_levels].iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut worst = 0.0_f64;
    let mut zero_group_sq = 0.0;
    for i in 0..gamma.len() {
        let w = omega[i];
        if w.is_infinite() {
            continue;
        }
        let pen = lambda_i * w;
        let in_group = i < n_levels;
        if gamma[i] != 0.0 {
            let mut sub = pen * gamma[i].signum();
            if in_group && lambda_g > 0.0 {
                sub += lambda_g * gamma[i] / delta_norm;
            }
            worst = worst.max((sub - g[i]).abs());
        } else if in_group && delta_norm == 0.0 {
            let s = (g[i].abs() - pen).max(0.0);
            zero_group_sq += s * s;
        } else {
            worst = worst.max((g[i].abs() - pen).max(0.0));
        }
    }
    if n_levels > 0 && delta_norm == 0.0 {
        worst = worst.max((zero_group_sq.sqrt() - lambda_g).max(0.0));
    }
    worst
}
