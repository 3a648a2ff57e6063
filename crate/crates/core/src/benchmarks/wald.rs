use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::design::{build_cecm_design, CecmDesign, DeterministicSpec, TimeSeriesPanel};
use crate::error::{Result, SpecsError};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WaldResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub reject: bool,
    pub null_draws: usize,
    /// Lagged levels entering the test.
    pub n_levels_tested: usize,
}

fn residualize(x: &DMatrix<f64>, on: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if on.ncols() == 0 {
        return Ok(x.clone());
    }
    let mut out = x.clone();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let b = linalg::ols_qr(on, &col)?;
        out.set_column(j, &(col - on * b));
    }
    Ok(out)
}

/// Wald statistic for joint significance of the lagged levels in the OLS
/// regression on `subset` (all columns when `None`). Deterministic terms are
/// always included through the projection. Zero when no level is in `subset`.
pub fn wald_coint_stat(design: &CecmDesign, subset: Option<&[usize]>) -> Result<f64> {
    let k = design.n_coef();
    let mut cols: Vec<usize> = match subset {
        Some(s) => s.to_vec(),
        None => (0..k).collect(),
    };
    cols.sort_unstable();
    cols.dedup();
    if let Some(&bad) = cols.iter().find(|&&c| c >= k) {
        return Err(SpecsError::InvalidInput(format!("column {bad} out of range ({k} columns)")));
    }
    let (levels, rest): (Vec<usize>, Vec<usize>) = cols.iter().partition(|&&c| c < design.n_levels);
    if levels.is_empty() {
        return Ok(0.0);
    }
    let n_params = cols.len() + design.d.ncols();
    if n_params >= design.n_obs() {
        return Err(SpecsError::InsufficientRows { needed: n_params + 1, available: design.n_obs() });
    }
    let x_rest = design.v_proj.select_columns(&rest);
    let z = residualize(&design.v_proj.select_columns(&levels), &x_rest)?;
    let y = residualize(&DMatrix::from_column_slice(design.n_obs(), 1, design.dy_proj.as_slice()), &x_rest)?;
    let y = DVector::from_column_slice(y.as_slice());
    let delta = linalg::ols_qr(&z, &y)?;
    let fitted = &z * &delta;
    let rss = (&y - &fitted).norm_squared();
    let sigma2 = rss / (design.n_obs() - n_params) as f64;
    if !(sigma2 > 0.0) {
        return Err(SpecsError::Degenerate("Wald regression fits exactly".into()));
    }
    Ok(fitted.norm_squared() / sigma2)
}

type CacheKey = (usize, usize, usize, DeterministicSpec, usize, u64);

static CRITICAL_VALUES: Mutex<Option<HashMap<CacheKey, f64>>> = Mutex::new(None);

/// Null statistic on one panel of independent Gaussian random walks.
fn null_draw(t_eff: usize, n_levels: usize, p: usize, det: DeterministicSpec, seed: u64, draw: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    let t = t_eff + p + 1;
    let mut m = DMatrix::zeros(t, n_levels);
    for j in 0..n_levels {
        let mut level = 0.0;
        for i in 0..t {
            level += rng.sample::<f64, _>(StandardNormal);
            m[(i, j)] = level;
        }
    }
    let panel = TimeSeriesPanel::from_matrix(m)?;
    let design = build_cecm_design(&panel, p, det)?;
    wald_coint_stat(&design, None)
}

/// 95th percentile (nearest rank) of the Wald statistic over `n_draws` panels of
/// `n_levels` independent random walks with `t_eff` usable rows. Cached per key.
pub fn wald_critical_value(
    t_eff: usize,
    n_levels: usize,
    p: usize,
    det: DeterministicSpec,
    n_draws: usize,
    seed: u64,
) -> Result<f64> {
    if n_draws < 1000 {
        return Err(SpecsError::InvalidInput(format!("{n_draws} null draws; at least 1000 required")));
    }
    if n_levels == 0 {
        return Err(SpecsError::InvalidInput("critical value needs at least one level".into()));
    }
    let key = (t_eff, n_levels, p, det, n_draws, seed);
    if let Some(cv) = CRITICAL_VALUES.lock().unwrap().as_ref().and_then(|c| c.get(&key)) {
        return Ok(*cv);
    }
    let mut stats: Vec<f64> = (0..n_draws as u64)
        .into_par_iter()
        .map(|d| null_draw(t_eff, n_levels, p, det, seed, d))
        .collect::<Result<_>>()?;
    stats.sort_by(f64::total_cmp);
    let rank = (0.95 * n_draws as f64).ceil() as usize;
    let cv = stats[rank - 1];
    CRITICAL_VALUES.lock().unwrap().get_or_insert_with(HashMap::new).insert(key, cv);
    Ok(cv)
}

/// Wald statistic with its simulated 5% critical value. For a post-selection
/// test the critical value matches the number of selected levels.
pub fn wald_test(design: &CecmDesign, subset: Option<&[usize]>, n_draws: usize, seed: u64) -> Result<WaldResult> {
    let statistic = wald_coint_stat(design, subset)?;
    let n_levels_tested = match subset {
        Some(s) => {
            let mut l: Vec<usize> = s.iter().copied().filter(|&c| c < design.n_levels).collect();
            l.sort_unstable();
            l.dedup();
            l.len()
        }
        None => design.n_levels,
    };
    if n_levels_tested == 0 {
        return Ok(WaldResult { statistic, critical_value: 0.0, reject: false, null_draws: 0, n_levels_tested });
    }
    let critical_value = wald_critical_value(design.n_obs(), n_levels_tested, design.p, design.deterministic, n_draws, seed)?;
    Ok(WaldResult {
        statistic,
        critical_value,
        reject: statistic > critical_value,
        null_draws: n_draws,
        n_levels_tested,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn random_walk_panel(seed: u64, t: usize, n: usize) -> TimeSeriesPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::zeros(t, n);
        for j in 0..n {
            for i in 1..t {
                m[(i, j)] = m[(i - 1, j)] + rng.sample::<f64, _>(StandardNormal);
            }
        }
        TimeSeriesPanel::from_matrix(m).unwrap()
    }

    /// `(RSS_restricted − RSS_unrestricted) / σ̂²` with both fits by direct OLS.
    fn rss_difference_oracle(design: &CecmDesign, cols: &[usize]) -> f64 {
        let rest: Vec<usize> = cols.iter().copied().filter(|&c| c >= design.n_levels).collect();
        let fit = |idx: &[usize]| {
            let x = design.v_proj.select_columns(idx);
            let b = linalg::ols_qr(&x, &design.dy_proj).unwrap();
            (&design.dy_proj - x * b).norm_squared()
        };
        let rss_u = fit(cols);
        let rss_r = if rest.is_empty() { design.dy_proj.norm_squared() } else { fit(&rest) };
        let s2 = rss_u / (design.n_obs() - cols.len() - design.d.ncols()) as f64;
        (rss_r - rss_u) / s2
    }

    #[test]
    fn matches_rss_difference() {
        let panel = random_walk_panel(3, 80, 4);
        let design = build_cecm_design(&panel, 2, DeterministicSpec::Constant).unwrap();
        let all: Vec<usize> = (0..design.n_coef()).collect();
        let w = wald_coint_stat(&design, None).unwrap();
        assert!((w - rss_difference_oracle(&design, &all)).abs() < 1e-8 * w.max(1.0));
        let subset = [0, 2, 5, 7, 9];
        let w = wald_coint_stat(&design, Some(&subset)).unwrap();
        assert!((w - rss_difference_oracle(&design, &subset)).abs() < 1e-8 * w.max(1.0));
    }

    #[test]
    fn no_levels_gives_zero() {
        let panel = random_walk_panel(4, 50, 3);
        let design = build_cecm_design(&panel, 1, DeterministicSpec::Constant).unwrap();
        assert_eq!(wald_coint_stat(&design, Some(&[3, 4])).unwrap(), 0.0);
        assert!(!wald_test(&design, Some(&[3, 4]), 1000, 1).unwrap().reject);
    }

    #[test]
    fn invariant_to_level_rescaling() {
        let panel = random_walk_panel(5, 60, 3);
        let design = build_cecm_design(&panel, 1, DeterministicSpec::ConstantAndTrend).unwrap();
        let mut scaled = design.clone();
        for (j, c) in [(0, -3.0), (2, 0.01)] {
            scaled.v.column_mut(j).scale_mut(c);
            scaled.v_proj.column_mut(j).scale_mut(c);
        }
        let a = wald_coint_stat(&design, None).unwrap();
        let b = wald_coint_stat(&scaled, None).unwrap();
        assert!((a - b).abs() < 1e-8 * a.max(1.0));
    }

    #[test]
    fn zero_ols_levels_give_zero_statistic() {
        // dy orthogonal to every regressor after projection.
        let t = 40;
        let v = DMatrix::from_fn(t, 2, |i, j| if j == 0 { (i % 2) as f64 } else { ((i / 2) % 2) as f64 });
        let dy = DVector::from_fn(t, |i, _| [1.0, -1.0, -1.0, 1.0][i % 4]);
        let design = CecmDesign::from_parts(dy, v, DeterministicSpec::None, 0, 1, vec!["a".into(), "b".into()], 0, 1).unwrap();
        assert!(wald_coint_stat(&design, None).unwrap().abs() < 1e-20);
    }

    #[test]
    fn single_level_critical_value_near_squared_adf() {
        let cv = wald_critical_value(120, 1, 1, DeterministicSpec::Constant, 1000, 11).unwrap();
        assert!((6.0..11.0).contains(&cv), "cv {cv}");
        let again = wald_critical_value(120, 1, 1, DeterministicSpec::Constant, 1000, 11).unwrap();
        assert_eq!(cv, again);
    }

    #[test]
    fn too_few_draws_rejected() {
        assert!(wald_critical_value(100, 1, 1, DeterministicSpec::Constant, 10, 0).is_err());
    }
}
