use nalgebra::{DMatrix, DVector};

use super::kkt::{kkt_residual, residual_from_gradient};
use super::{AdaptiveWeights, SolverConfig, SpecsSolution};
use crate::design::{recover_theta, CecmDesign};
use crate::error::{Result, SpecsError};
use crate::linalg;

/// Iterations with an unchanged signed support before the active-set solve is tried.
const POLISH_PATIENCE: usize = 5;
const NEWTON_MAX_ITER: usize = 50;

/// Sufficient statistics of a projected design: `V'V`, `V'dy`, `dy'dy`.
#[derive(Debug, Clone)]
pub struct GramProblem {
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yy: f64,
    pub n_levels: usize,
}

impl GramProblem {
    pub fn from_design(design: &CecmDesign) -> Self {
        let vt = design.v_proj.transpose();
        Self {
            gram: &vt * &design.v_proj,
            xty: &vt * &design.dy_proj,
            yy: design.dy_proj.norm_squared(),
            n_levels: design.n_levels,
        }
    }

    pub fn n_coef(&self) -> usize {
        self.xty.len()
    }
}

/// Result of one solve in the original coefficient space.
#[derive(Debug, Clone)]
pub struct RawFit {
    pub gamma: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

/// A [`GramProblem`] restricted to the free coordinates of a weight vector and
/// rescaled for iteration. Reused across all penalty pairs of a path.
#[derive(Debug, Clone)]
pub struct PreparedProblem {
    n_coef: usize,
    free: Vec<usize>,
    /// The first `n_group` free coordinates are lagged levels.
    n_group: usize,
    g: DMatrix<f64>,
    b: DVector<f64>,
    yy: f64,
    /// Iteration variable is `u = iter_scale ∘ x` where `x = col_scale ∘ γ`.
    iter_scale: Vec<f64>,
    col_scale: Vec<f64>,
    omega: Vec<f64>,
    lipschitz: f64,
    kkt_scale: f64,
    config: SolverConfig,
}

struct Iterate {
    u: DVector<f64>,
    gu: DVector<f64>,
    f: f64,
}

impl PreparedProblem {
    pub fn new(problem: &GramProblem, weights: &AdaptiveWeights, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        let k = problem.n_coef();
        if weights.len() != k {
            return Err(SpecsError::DimensionMismatch(format!("{} weights for {k} coefficients", weights.len())));
        }
        if weights.omega.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(SpecsError::InvalidInput("weights must be nonnegative".into()));
        }
        let free: Vec<usize> = (0..k).filter(|&i| weights.is_free(i)).collect();
        let n_group = free.iter().filter(|&&i| i < problem.n_levels).count();
        let diag: Vec<f64> = free.iter().map(|&i| problem.gram[(i, i)]).collect();

        let col_scale: Vec<f64> = if config.standardize {
            diag.iter().map(|&d| if d > 0.0 { d.sqrt() } else { 1.0 }).collect()
        } else {
            vec![1.0; free.len()]
        };
        // diagonal of the (possibly standardized) Gram
        let pdiag: Vec<f64> = diag.iter().zip(&col_scale).map(|(d, c)| d / (c * c)).collect();
        let iter_scale: Vec<f64> = if config.precondition {
            let group_mean = if n_group > 0 { pdiag[..n_group].iter().sum::<f64>() / n_group as f64 } else { 0.0 };
            let group_s = if group_mean > 0.0 { group_mean.sqrt() } else { 1.0 };
            (0..free.len())
                .map(|j| {
                    if j < n_group {
                        group_s
                    } else if pdiag[j] > 0.0 {
                        pdiag[j].sqrt()
                    } else {
                        1.0
                    }
                })
                .collect()
        } else {
            vec![1.0; free.len()]
        };
        let total: Vec<f64> = col_scale.iter().zip(&iter_scale).map(|(c, s)| c * s).collect();
        let g = DMatrix::from_fn(free.len(), free.len(), |a, c| {
            problem.gram[(free[a], free[c])] / (total[a] * total[c])
        });
        let b = DVector::from_fn(free.len(), |a, _| problem.xty[free[a]] / total[a]);
        let lipschitz = 2.0 * linalg::power_iteration(&g, config.power_iterations, config.power_tolerance) * 1.01;
        let kkt_scale = 2.0 * free
            .iter()
            .zip(&col_scale)
            .map(|(&i, c)| (problem.xty[i] / c).abs())
            .fold(0.0, f64::max);
        Ok(Self {
            n_coef: k,
            n_group,
            omega: free.iter().map(|&i| weights.omega[i]).collect(),
            free,
            g,
            b,
            yy: problem.yy,
            iter_scale,
            col_scale,
            lipschitz: if lipschitz > 0.0 { lipschitz } else { 1.0 },
            kkt_scale: if kkt_scale > 0.0 { kkt_scale } else { 1.0 },
            config: config.clone(),
        })
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    fn objective(&self, u: &DVector<f64>, gu: &DVector<f64>, w1: &[f64], lg: f64) -> f64 {
        let smooth = self.yy - 2.0 * self.b.dot(u) + u.dot(gu);
        let l1: f64 = u.iter().zip(w1).map(|(x, w)| if *x == 0.0 { 0.0 } else { w * x.abs() }).sum();
        smooth + l1 + lg * group_norm(u, self.n_group)
    }

    fn prox(&self, v: &mut DVector<f64>, w1: &[f64], lg: f64, step: f64) {
        for (x, w) in v.iter_mut().zip(w1) {
            *x = soft(*x, step * w);
        }
        if self.n_group > 0 && lg > 0.0 {
            let norm = group_norm(v, self.n_group);
            let shrink = if norm > 0.0 { (1.0 - step * lg / norm).max(0.0) } else { 0.0 };
            for x in v.iter_mut().take(self.n_group) {
                *x *= shrink;
            }
        }
    }

    /// KKT violation in the (possibly standardized) coefficient space, relative to `2‖b‖_∞`.
    fn kkt(&self, u: &DVector<f64>, gu: &DVector<f64>, lambda_i: f64, lambda_g: f64) -> f64 {
        let s = &self.iter_scale;
        let g: Vec<f64> = (0..u.len()).map(|j| 2.0 * s[j] * (self.b[j] - gu[j])).collect();
        let x: Vec<f64> = (0..u.len()).map(|j| u[j] / s[j]).collect();
        residual_from_gradient(&g, &x, &self.omega, lambda_i, lambda_g, self.n_group) / self.kkt_scale
    }

    fn to_gamma(&self, u: &DVector<f64>) -> Vec<f64> {
        let mut gamma = vec![0.0; self.n_coef];
        for (j, &i) in self.free.iter().enumerate() {
            gamma[i] = u[j] / (self.iter_scale[j] * self.col_scale[j]);
        }
        gamma
    }

    pub fn solve(&self, lambda_i: f64, lambda_g: f64, warm: Option<&[f64]>) -> Result<RawFit> {
        if !(lambda_i >= 0.0 && lambda_g >= 0.0 && lambda_i.is_finite() && lambda_g.is_finite()) {
            return Err(SpecsError::InvalidInput(format!(
                "penalties must be finite and nonnegative (lambda_I = {lambda_i}, lambda_G = {lambda_g})"
            )));
        }
        let k = self.free.len();
        if k == 0 {
            return Ok(RawFit { gamma: vec![0.0; self.n_coef], iterations: 0, converged: true, kkt_residual: 0.0 });
        }
        let cfg = &self.config;
        let total = |j: usize| self.iter_scale[j] * self.col_scale[j];
        let w1: Vec<f64> = (0..k).map(|j| lambda_i * self.omega[j] / self.iter_scale[j]).collect();
        let lg = if self.n_group > 0 { lambda_g / self.iter_scale[0] } else { 0.0 };

        let u0 = match warm {
            Some(w) => {
                if w.len() != self.n_coef {
                    return Err(SpecsError::DimensionMismatch("warm start has wrong length".into()));
                }
                DVector::from_fn(k, |j, _| w[self.free[j]] * total(j))
            }
            None => DVector::zeros(k),
        };
        let gu0 = &self.g * &u0;
        let f0 = self.objective(&u0, &gu0, &w1, lg);
        let mut x = Iterate { u: u0, gu: gu0, f: f0 };

        let kkt0 = self.kkt(&x.u, &x.gu, lambda_i, lambda_g);
        if kkt0 <= cfg.kkt_tolerance {
            return Ok(self.finish_converged(x, 0, kkt0, &w1, lg, lambda_i, lambda_g));
        }

        let mut y = x.u.clone();
        let mut gy = x.gu.clone();
        let mut t = 1.0_f64;
        let mut lip = self.lipschitz;
        let mut pattern = sign_pattern(&x.u);
        let mut stable = 0usize;
        let mut polish_tried = false;
        let mut rejected_from_x = false;
        let mut kkt_last = kkt0;

        for it in 1..=cfg.max_iterations {
            let grad = (&gy - &self.b) * 2.0;
            let (z, gz) = loop {
                let mut z = &y - &grad / lip;
                self.prox(&mut z, &w1, lg, 1.0 / lip);
                let gz = &self.g * &z;
                let d = &z - &y;
                let dgd = d.dot(&(&gz - &gy));
                let dd = d.norm_squared();
                if dgd <= 0.5 * lip * dd * (1.0 + 1e-10) || dd == 0.0 {
                    break (z, gz);
                }
                lip *= 2.0;
            };
            if z.iter().any(|v| !v.is_finite()) {
                return Err(SpecsError::NanIterate(it));
            }
            let fz = self.objective(&z, &gz, &w1, lg);
            if fz <= x.f {
                let rel = (x.f - fz) / fz.abs().max(f64::MIN_POSITIVE);
                let x_prev_u = std::mem::replace(&mut x.u, z);
                let x_prev_gu = std::mem::replace(&mut x.gu, gz);
                x.f = fz;
                rejected_from_x = false;
                if cfg.acceleration {
                    let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                    let beta = (t - 1.0) / t_next;
                    y = &x.u + (&x.u - &x_prev_u) * beta;
                    gy = &x.gu + (&x.gu - &x_prev_gu) * beta;
                    t = t_next;
                } else {
                    y.copy_from(&x.u);
                    gy.copy_from(&x.gu);
                }

                kkt_last = self.kkt(&x.u, &x.gu, lambda_i, lambda_g);
                if kkt_last <= cfg.kkt_tolerance {
                    return Ok(self.finish_converged(x, it, kkt_last, &w1, lg, lambda_i, lambda_g));
                }

                let p = sign_pattern(&x.u);
                if p == pattern {
                    stable += 1;
                } else {
                    pattern = p;
                    stable = 0;
                    polish_tried = false;
                }
                let stalled = rel < cfg.tolerance;
                if cfg.polish && !polish_tried && (stable >= POLISH_PATIENCE || stalled) {
                    polish_tried = true;
                    if let Some((pol, kkt)) = self.polish(&x, &w1, lg, lambda_i, lambda_g) {
                        return Ok(self.finish(&pol, it, true, kkt));
                    }
                }
            } else {
                // no decrease: restart momentum from the last accepted point
                if rejected_from_x {
                    // a plain step from x failed to decrease: numerical floor
                    return Ok(self.finish_stalled(x, it, kkt_last, &w1, lg, lambda_i, lambda_g));
                }
                rejected_from_x = true;
                t = 1.0;
                y.copy_from(&x.u);
                gy.copy_from(&x.gu);
            }
        }
        Ok(self.finish_stalled(x, cfg.max_iterations, kkt_last, &w1, lg, lambda_i, lambda_g))
    }

    /// Last chance for a point that stopped short of the KKT tolerance.
    #[allow(clippy::too_many_arguments)]
    fn finish_stalled(
        &self,
        x: Iterate,
        iterations: usize,
        kkt: f64,
        w1: &[f64],
        lg: f64,
        lambda_i: f64,
        lambda_g: f64,
    ) -> RawFit {
        if self.config.polish {
            if let Some((pol, pk)) = self.polish(&x, w1, lg, lambda_i, lambda_g) {
                return self.finish(&pol, iterations, true, pk);
            }
        }
        self.finish(&x, iterations, kkt <= self.config.kkt_tolerance, kkt)
    }

    /// A point that meets the KKT tolerance is still refined on its support:
    /// the tolerance is relative to the largest `|V'dy|`, which can leave
    /// poorly scaled coordinates visibly off the exact minimizer.
    #[allow(clippy::too_many_arguments)]
    fn finish_converged(
        &self,
        x: Iterate,
        iterations: usize,
        kkt: f64,
        w1: &[f64],
        lg: f64,
        lambda_i: f64,
        lambda_g: f64,
    ) -> RawFit {
        if self.config.polish {
            if let Some((pol, pk)) = self.polish(&x, w1, lg, lambda_i, lambda_g) {
                if pk <= kkt {
                    return self.finish(&pol, iterations, true, pk);
                }
            }
        }
        self.finish(&x, iterations, true, kkt)
    }

    fn finish(&self, x: &Iterate, iterations: usize, converged: bool, kkt: f64) -> RawFit {
        RawFit { gamma: self.to_gamma(&x.u), iterations, converged, kkt_residual: kkt }
    }

    /// Solve the stationarity equations on the current signed support and keep
    /// the result only if signs survive, the objective does not rise, and the
    /// full KKT conditions hold.
    fn polish(&self, x: &Iterate, w1: &[f64], lg: f64, lambda_i: f64, lambda_g: f64) -> Option<(Iterate, f64)> {
        let active: Vec<usize> = (0..x.u.len()).filter(|&j| x.u[j] != 0.0).collect();
        if active.is_empty() {
            return None;
        }
        let signs: Vec<f64> = active.iter().map(|&j| x.u[j].signum()).collect();
        let n_ga = active.iter().filter(|&&j| j < self.n_group).count();
        let gaa = linalg::select_square(&self.g, &active);
        let ba = linalg::select_entries(&self.b, &active);
        let wa: DVector<f64> = DVector::from_fn(active.len(), |a, _| w1[active[a]] * signs[a]);

        let ua = if n_ga == 0 || lg == 0.0 {
            linalg::spd_solve(&gaa, &(&ba - &wa * 0.5)).ok()?
        } else {
            self.group_newton(&gaa, &ba, &wa, n_ga, lg, linalg::select_entries(&x.u, &active))?
        };
        if ua.iter().zip(&signs).any(|(v, s)| !v.is_finite() || v.signum() != *s || *v == 0.0) {
            return None;
        }
        let mut u = DVector::zeros(x.u.len());
        for (a, &j) in active.iter().enumerate() {
            u[j] = ua[a];
        }
        let gu = &self.g * &u;
        let f = self.objective(&u, &gu, w1, lg);
        if f > x.f + 1e-12 * x.f.abs() {
            return None;
        }
        let kkt = self.kkt(&u, &gu, lambda_i, lambda_g);
        if kkt > self.config.kkt_tolerance {
            return None;
        }
        Some((Iterate { u, gu, f }, kkt))
    }

    /// Damped Newton on `2(G u − b) + w ∘ s + λ_G [u_δ/‖u_δ‖; 0] = 0`.
    fn group_newton(
        &self,
        gaa: &DMatrix<f64>,
        ba: &DVector<f64>,
        wa: &DVector<f64>,
        n_ga: usize,
        lg: f64,
        start: DVector<f64>,
    ) -> Option<DVector<f64>> {
        let merit = |u: &DVector<f64>| -> f64 {
            u.dot(&(gaa * u)) - 2.0 * ba.dot(u) + wa.dot(u) + lg * group_norm(u, n_ga)
        };
        let tol = 1e-14 * (2.0 * ba.amax()).max(f64::MIN_POSITIVE);
        let mut u = start;
        let mut phi = merit(&u);
        for _ in 0..NEWTON_MAX_ITER {
            let nrm = group_norm(&u, n_ga);
            if nrm == 0.0 {
                return None;
            }
            let mut f = (gaa * &u - ba) * 2.0 + wa;
            for j in 0..n_ga {
                f[j] += lg * u[j] / nrm;
            }
            if f.amax() <= tol {
                return Some(u);
            }
            let mut jac = gaa * 2.0;
            for a in 0..n_ga {
                for c in 0..n_ga {
                    let id = if a == c { 1.0 } else { 0.0 };
                    jac[(a, c)] += lg / nrm * (id - u[a] * u[c] / (nrm * nrm));
                }
            }
            let step = jac.cholesky()?.solve(&f);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let cand = &u - &step * alpha;
                let pc = merit(&cand);
                if pc <= phi && group_norm(&cand, n_ga) > 0.0 {
                    if cand == u {
                        return Some(u);
                    }
                    u = cand;
                    phi = pc;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Some(u);
            }
        }
        Some(u)
    }
}

#[inline]
fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

fn group_norm(u: &DVector<f64>, n_group: usize) -> f64 {
    u.iter().take(n_group).map(|x| x * x).sum::<f64>().sqrt()
}

fn sign_pattern(u: &DVector<f64>) -> Vec<i8> {
    u.iter().map(|x| if *x > 0.0 { 1 } else if *x < 0.0 { -1 } else { 0 }).collect()
}

/// Assemble a reported solution from a raw fit.
pub(crate) fn finalize(
    design: &CecmDesign,
    weights: &AdaptiveWeights,
    lambda_i: f64,
    lambda_g: f64,
    raw: RawFit,
    config: &SolverConfig,
) -> Result<SpecsSolution> {
    let gamma_v = DVector::from_column_slice(&raw.gamma);
    let resid = &design.dy_proj - &design.v_proj * &gamma_v;
    let rss = resid.norm_squared();
    let col = |i: usize| -> f64 {
        if config.standardize {
            let n = design.v_proj.column(i).norm();
            if n > 0.0 { n } else { 1.0 }
        } else {
            1.0
        }
    };
    let mut l1 = 0.0;
    let mut dn = 0.0;
    for (i, &g) in raw.gamma.iter().enumerate() {
        if g != 0.0 {
            l1 += weights.omega[i] * (g * col(i)).abs();
            if i < design.n_levels {
                dn += (g * col(i)).powi(2);
            }
        }
    }
    let objective = rss + lambda_i * l1 + lambda_g * dn.sqrt();
    let kkt = if config.standardize {
        raw.kkt_residual
    } else {
        kkt_residual(design, weights, lambda_i, lambda_g, &raw.gamma)
    };
    let n = design.n_levels;
    Ok(SpecsSolution {
        theta: recover_theta(design, &gamma_v)?,
        active_delta: (0..n).filter(|&i| raw.gamma[i] != 0.0).collect(),
        active_pi: (n..raw.gamma.len()).filter(|&i| raw.gamma[i] != 0.0).map(|i| i - n).collect(),
        gamma: raw.gamma,
        n_levels: n,
        lambda_i,
        lambda_g,
        objective,
        rss,
        iterations: raw.iterations,
        converged: raw.converged,
        kkt_residual: kkt,
    })
}

/// Minimize the penalized objective at one penalty pair.
pub fn specs_fit(
    design: &CecmDesign,
    weights: &AdaptiveWeights,
    lambda_i: f64,
    lambda_g: f64,
    config: &SolverConfig,
    warm_start: Option<&[f64]>,
) -> Result<SpecsSolution> {
    let problem = GramProblem::from_design(design);
    let prepared = PreparedProblem::new(&problem, weights, config)?;
    let raw = prepared.solve(lambda_i, lambda_g, warm_start)?;
    finalize(design, weights, lambda_i, lambda_g, raw, config)
}
