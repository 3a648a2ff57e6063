use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::design::{build_cecm_design, CecmDesign, DeterministicSpec, TimeSeriesPanel};
use crate::linalg;

/// Cointegrated toy panel: y error-corrects towards x1 - x2.
fn panel(t: usize, n: usize, seed: u64) -> TimeSeriesPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(t, n);
    for i in 1..t {
        for j in 1..n {
            let e: f64 = rng.sample(StandardNormal);
            m[(i, j)] = m[(i - 1, j)] + e;
        }
        let ec = m[(i - 1, 0)] - m[(i - 1, 1)] + if n > 2 { m[(i - 1, 2)] } else { 0.0 };
        let e: f64 = rng.sample(StandardNormal);
        m[(i, 0)] = m[(i - 1, 0)] - 0.4 * ec + 0.5 * (m[(i, 1)] - m[(i - 1, 1)]) + e;
    }
    TimeSeriesPanel::from_matrix(m).unwrap()
}

fn design(t: usize, n: usize, seed: u64) -> CecmDesign {
    build_cecm_design(&panel(t, n, seed), 1, DeterministicSpec::Constant).unwrap()
}

fn ridge_weights(d: &CecmDesign) -> AdaptiveWeights {
    let init = initial_estimate(d, InitialEstimator::RidgeGcv).unwrap();
    compute_weights(init.as_slice(), 2.0, 1.0, d.n_levels).unwrap()
}

/// Independent subgradient check written directly from the optimality conditions.
fn kkt_oracle(d: &CecmDesign, w: &AdaptiveWeights, li: f64, lg: f64, gamma: &[f64]) -> f64 {
    let gv = DVector::from_column_slice(gamma);
    let r = &d.dy_proj - &d.v_proj * &gv;
    let n = d.n_levels;
    let dn = gamma[..n].iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut worst = 0.0_f64;
    let mut zero_block = Vec::new();
    for i in 0..gamma.len() {
        if w.omega[i].is_infinite() {
            assert_eq!(gamma[i], 0.0, "pinned coordinate {i} moved");
            continue;
        }
        let gi = 2.0 * d.v_proj.column(i).dot(&r);
        let pen = li * w.omega[i];
        if i < n && dn == 0.0 {
            zero_block.push((gi.abs() - pen).max(0.0));
        } else if gamma[i] != 0.0 {
            let group = if i < n { lg * gamma[i] / dn } else { 0.0 };
            worst = worst.max((-gi + pen * gamma[i].signum() + group).abs());
        } else {
            worst = worst.max(gi.abs() - pen);
        }
    }
    if !zero_block.is_empty() {
        let s = zero_block.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(s - lg);
    }
    worst / (2.0 * (d.v_proj.transpose() * &d.dy_proj).amax())
}

#[test]
fn unpenalized_fit_is_ols() {
    let d = design(100, 3, 1);
    let w = AdaptiveWeights::uniform(d.n_coef());
    let sol = specs_fit(&d, &w, 0.0, 0.0, &SolverConfig::default(), None).unwrap();
    let ols = linalg::ols_qr(&d.v_proj, &d.dy_proj).unwrap();
    let g = DVector::from_column_slice(&sol.gamma);
    assert!(sol.converged);
    assert!((&g - &ols).norm() <= 1e-6 * ols.norm());
}

#[test]
fn orthonormal_design_soft_thresholds() {
    let t = 6;
    let mut v = DMatrix::zeros(t, 3);
    for j in 0..3 {
        v[(j, j)] = 1.0;
    }
    let dy = DVector::from_vec(vec![3.0, -0.4, 1.5, 0.2, 0.1, -0.3]);
    let d = CecmDesign::from_parts(dy, v, DeterministicSpec::None, 1, 1, vec!["a".into(), "b".into(), "c".into()], 0, 1)
        .unwrap();
    let w = AdaptiveWeights { omega: vec![1.0, 2.0, 0.5], k_delta: 1.0, k_pi: 1.0 };
    let li = 1.6;
    let sol = specs_fit(&d, &w, li, 0.0, &SolverConfig::default(), None).unwrap();
    let expect = |z: f64, om: f64| {
        let t = li * om / 2.0;
        z.signum() * (z.abs() - t).max(0.0)
    };
    assert_relative_eq!(sol.gamma[0], expect(3.0, 1.0), epsilon = 1e-10);
    assert_eq!(sol.gamma[1], 0.0);
    assert_relative_eq!(sol.gamma[2], expect(1.5, 0.5), epsilon = 1e-10);
}

#[test]
fn lambda_max_gives_zero_solution() {
    let d = design(100, 4, 2);
    let w = ridge_weights(&d);
    let lmax = lambda_max_i(&d, &w).unwrap();
    let sol = specs_fit(&d, &w, lmax, 0.0, &SolverConfig::default(), None).unwrap();
    assert!(sol.gamma.iter().all(|&x| x == 0.0));
    let below = specs_fit(&d, &w, 0.95 * lmax, 0.0, &SolverConfig::default(), None).unwrap();
    assert!(below.df() > 0);
}

#[test]
fn large_group_penalty_zeroes_levels() {
    let d = design(120, 3, 3);
    let w = AdaptiveWeights::uniform(d.n_coef());
    let sol = specs_fit(&d, &w, 0.0, 1e9, &SolverConfig::default(), None).unwrap();
    assert!(sol.delta().iter().all(|&x| x == 0.0));
    // oracle: OLS of dy on the short-run block alone
    let w_block = d.v_proj.columns(d.n_levels, d.n_short_run()).into_owned();
    let ols = linalg::ols_qr(&w_block, &d.dy_proj).unwrap();
    for (a, b) in sol.pi().iter().zip(ols.iter()) {
        assert!((a - b).abs() <= 1e-6 * ols.amax());
    }
}

#[test]
fn pinned_coordinates_stay_zero() {
    let d = design(100, 4, 4);
    let w = ridge_weights(&d).exclude([0, 5, 7]);
    let grid = build_grid(&d, &w, &GridSpec { n_lambda_i: 10, n_lambda_g: 3, eps_ratio: 1e-4 }).unwrap();
    for sol in specs_path(&d, &w, &grid, &SolverConfig::default()).unwrap() {
        assert_eq!(sol.gamma[0], 0.0);
        assert_eq!(sol.gamma[5], 0.0);
        assert_eq!(sol.gamma[7], 0.0);
    }
}

#[test]
fn path_solutions_satisfy_kkt() {
    for seed in 0..5 {
        let d = design(100, 4, 10 + seed);
        let w = ridge_weights(&d);
        let grid = build_grid(&d, &w, &GridSpec { n_lambda_i: 20, n_lambda_g: 4, eps_ratio: 1e-4 }).unwrap();
        for sol in specs_path(&d, &w, &grid, &SolverConfig::default()).unwrap() {
            let k = kkt_oracle(&d, &w, sol.lambda_i, sol.lambda_g, &sol.gamma);
            assert!(sol.converged, "seed {seed}: not converged at {} {}", sol.lambda_i, sol.lambda_g);
            assert!(k <= 1e-6, "seed {seed}: kkt {k:e} at ({}, {})", sol.lambda_i, sol.lambda_g);
            assert!((k - sol.kkt_residual).abs() <= 1e-9);
        }
    }
}

#[test]
fn reported_objective_matches_recomputation() {
    let d = design(100, 3, 20);
    let w = ridge_weights(&d);
    let lmax = lambda_max_i(&d, &w).unwrap();
    let sol = specs_fit(&d, &w, 0.05 * lmax, 10.0, &SolverConfig::default(), None).unwrap();
    let g = DVector::from_column_slice(&sol.gamma);
    let rss = (&d.dy_proj - &d.v_proj * &g).norm_squared();
    let pen: f64 = (0..g.len()).filter(|&i| g[i] != 0.0).map(|i| w.omega[i] * g[i].abs()).sum();
    let obj = rss + sol.lambda_i * pen + sol.lambda_g * g.rows(0, d.n_levels).norm();
    assert_relative_eq!(sol.objective, obj, max_relative = 1e-8);
}

#[test]
fn warm_and_cold_paths_agree() {
    let d = design(100, 10, 30);
    let w = ridge_weights(&d);
    let grid = build_grid(&d, &w, &GridSpec { n_lambda_i: 15, n_lambda_g: 3, eps_ratio: 1e-3 }).unwrap();
    let cfg = SolverConfig::default();
    let warm = specs_path(&d, &w, &grid, &cfg).unwrap();
    for sol in &warm {
        let cold = specs_fit(&d, &w, sol.lambda_i, sol.lambda_g, &cfg, None).unwrap();
        for (a, b) in sol.gamma.iter().zip(&cold.gamma) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn optimal_value_monotone_in_penalty() {
    let d = design(100, 4, 40);
    let w = ridge_weights(&d);
    let grid = build_grid(&d, &w, &GridSpec { n_lambda_i: 25, n_lambda_g: 3, eps_ratio: 1e-4 }).unwrap();
    let path = specs_path(&d, &w, &grid, &SolverConfig::default()).unwrap();
    for row in path.chunks(grid.lambda_i.len()) {
        for pair in row.windows(2) {
            assert!(pair[1].objective <= pair[0].objective * (1.0 + 1e-9));
        }
    }
}

#[test]
fn unaccelerated_solver_reaches_same_point() {
    let d = design(80, 3, 50);
    let w = ridge_weights(&d);
    let lmax = lambda_max_i(&d, &w).unwrap();
    let fast = specs_fit(&d, &w, 0.01 * lmax, 1.0, &SolverConfig::default(), None).unwrap();
    let cfg = SolverConfig { acceleration: false, polish: false, max_iterations: 200_000, ..Default::default() };
    let slow = specs_fit(&d, &w, 0.01 * lmax, 1.0, &cfg, None).unwrap();
    assert_relative_eq!(fast.objective, slow.objective, max_relative = 1e-7);
}

#[test]
fn standardized_fit_solves_scaled_problem() {
    let d = design(100, 3, 60);
    let w = AdaptiveWeights::uniform(d.n_coef());
    let cfg = SolverConfig { standardize: true, ..Default::default() };
    let li = 5.0;
    let sol = specs_fit(&d, &w, li, 0.0, &cfg, None).unwrap();
    // oracle: the plain solver on an explicitly standardized design
    let norms: Vec<f64> = d.v_proj.column_iter().map(|c| c.norm()).collect();
    let mut sd = d.clone();
    for (j, n) in norms.iter().enumerate() {
        sd.v_proj.column_mut(j).unscale_mut(*n);
    }
    let plain = specs_fit(&sd, &w, li, 0.0, &SolverConfig::default(), None).unwrap();
    for j in 0..d.n_coef() {
        assert!((sol.gamma[j] * norms[j] - plain.gamma[j]).abs() <= 1e-7 * (1.0 + plain.gamma[j].abs()));
    }
}

#[test]
fn rejects_bad_penalties() {
    let d = design(60, 2, 70);
    let w = AdaptiveWeights::uniform(d.n_coef());
    assert!(specs_fit(&d, &w, -1.0, 0.0, &SolverConfig::default(), None).is_err());
    assert!(specs_fit(&d, &w, f64::NAN, 0.0, &SolverConfig::default(), None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn scaling_equivariance(seed in 0u64..1000, c in 0.1f64..10.0, frac in 0.01f64..0.5) {
        let d = design(80, 3, seed);
        let w = AdaptiveWeights::uniform(d.n_coef());
        let lmax = lambda_max_i(&d, &w).unwrap();
        let base = specs_fit(&d, &w, frac * lmax, 0.3 * frac * lmax, &SolverConfig::default(), None).unwrap();
        let mut scaled = d.clone();
        scaled.dy_proj *= c;
        let s = specs_fit(&scaled, &w, c * frac * lmax, c * 0.3 * frac * lmax, &SolverConfig::default(), None).unwrap();
        for (a, b) in base.gamma.iter().zip(&s.gamma) {
            prop_assert!((c * a - b).abs() <= 1e-7 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn permutation_invariance(seed in 0u64..1000, frac in 0.01f64..0.5, rot in 1usize..4) {
        let d = design(80, 3, seed);
        let w = ridge_weights(&d);
        let lmax = lambda_max_i(&d, &w).unwrap();
        let base = specs_fit(&d, &w, frac * lmax, 0.0, &SolverConfig::default(), None).unwrap();
        // permute within the level block and within the short-run block
        let n = d.n_levels;
        let k = d.n_coef();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n)
            .chain((n..k).map(|i| n + (i - n + rot) % (k - n)))
            .collect();
        let mut pd = d.clone();
        pd.v_proj = d.v_proj.select_columns(&perm);
        let pw = AdaptiveWeights { omega: perm.iter().map(|&i| w.omega[i]).collect(), ..w.clone() };
        let ps = specs_fit(&pd, &pw, frac * lmax, 0.0, &SolverConfig::default(), None).unwrap();
        for (j, &i) in perm.iter().enumerate() {
            prop_assert!((ps.gamma[j] - base.gamma[i]).abs() <= 1e-10 * (1.0 + base.gamma[i].abs()));
        }
    }

    #[test]
    fn kkt_holds_on_random_pairs(seed in 0u64..1000, fi in 0.0001f64..1.0, fg in 0.0f64..1.0) {
        let d = design(100, 4, seed);
        let w = ridge_weights(&d);
        let lmax = lambda_max_i(&d, &w).unwrap();
        let g = 2.0 * (d.levels_proj().transpose() * &d.dy_proj).norm();
        let sol = specs_fit(&d, &w, fi * lmax, fg * g, &SolverConfig::default(), None).unwrap();
        prop_assert!(kkt_oracle(&d, &w, sol.lambda_i, sol.lambda_g, &sol.gamma) <= 1e-6);
    }
}
