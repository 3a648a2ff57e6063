use rayon::prelude::*;
use serde::Serialize;

use super::dgp::{gen_factor, gen_vecm, DgpSpec};
use super::selection_metrics;
use crate::benchmarks::{adl_adf_fit, ols_solution, wald_test, WaldResult};
use crate::design::{build_cecm_design, ImpliedSingleEq};
use crate::error::{Result, SpecsError};
use crate::models::{fit_bic, EstimatorKind, ModelSettings};
use crate::nowcast::nowcast_one;

#[derive(Debug, Clone, Serialize)]
pub struct McConfig {
    pub estimators: Vec<EstimatorKind>,
    pub n_reps: usize,
    pub base_seed: u64,
    pub settings: ModelSettings,
    /// Wald test on the full OLS fit (when feasible) and on the SPECS₁ selection.
    pub wald: bool,
    pub wald_draws: usize,
    /// Worker threads; `None` uses the global pool.
    #[serde(skip)]
    pub jobs: Option<usize>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            estimators: vec![EstimatorKind::Specs1, EstimatorKind::Adl, EstimatorKind::OlsOracle],
            n_reps: 100,
            base_seed: 1,
            settings: ModelSettings::default(),
            wald: false,
            wald_draws: 1999,
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatorRep {
    pub estimator: EstimatorKind,
    pub nowcast: f64,
    /// Realized minus nowcast level.
    pub error: f64,
    pub has_levels: bool,
    pub df: usize,
    pub pcs: Option<f64>,
    pub pics: Option<f64>,
    /// Whether the reported solution met the KKT tolerance.
    pub converged: bool,
    /// Unconverged points on the penalty path.
    pub n_unconverged: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RepOutcome {
    pub rep: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorRep>,
    pub wald: Option<WaldResult>,
    pub wald_ps: Option<WaldResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RepFailure {
    pub rep: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub msne: Option<f64>,
    pub rmsne_abs: Option<f64>,
    /// Root mean squared nowcast error divided by the baseline's.
    pub rmsne: Option<f64>,
    pub pseudo_power: Option<f64>,
    pub pcs: Option<f64>,
    pub pics: Option<f64>,
    pub mean_df: Option<f64>,
    pub n_unconverged_selected: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct WaldSummary {
    pub rejection_rate: f64,
    pub n_tests: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub version: String,
    pub spec: DgpSpec,
    pub estimators: Vec<EstimatorKind>,
    pub baseline: EstimatorKind,
    pub n_reps: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub failures: Vec<RepFailure>,
    pub summaries: Vec<EstimatorSummary>,
    pub wald: Option<WaldSummary>,
    pub wald_ps: Option<WaldSummary>,
    pub notes: Vec<String>,
    pub reps: Vec<RepOutcome>,
}

impl MetricsReport {
    pub fn summary(&self, kind: EstimatorKind) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.estimator == kind)
    }

    /// RMSNE of `a` divided by RMSNE of `b` over the successful replications.
    pub fn rmsne_ratio(&self, a: EstimatorKind, b: EstimatorKind) -> Option<f64> {
        Some(self.summary(a)?.rmsne_abs? / self.summary(b)?.rmsne_abs?)
    }
}

fn run_rep(spec: &DgpSpec, cfg: &McConfig, rep: usize, wald_seed: u64) -> Result<RepOutcome> {
    let seed = cfg.base_seed.wrapping_add(rep as u64);
    let gen = DgpSpec { t: spec.t + 1, ..*spec };
    let (panel, truth): (_, Option<ImpliedSingleEq>) = if spec.family.is_vecm() {
        let (p, t) = gen_vecm(&gen, seed)?;
        (p, Some(t))
    } else {
        (gen_factor(&gen, seed)?, None)
    };
    let fit_panel = panel.window(0, spec.t)?;
    let design = build_cecm_design(&fit_panel, spec.p, spec.deterministic)?;
    let realized = panel.z(spec.t, 0);

    let mut estimators = Vec::with_capacity(cfg.estimators.len());
    let mut specs1_support = None;
    for &kind in &cfg.estimators {
        let (solution, n_unconverged) = match kind {
            EstimatorKind::Specs1 | EstimatorKind::Specs2 | EstimatorKind::Adl => {
                let fit = fit_bic(&design, kind, &cfg.settings)?;
                (Some(fit.solution), fit.n_unconverged)
            }
            EstimatorKind::OlsOracle => {
                let truth = truth.as_ref().ok_or_else(|| {
                    SpecsError::InvalidInput("the OLS oracle needs a family with known coefficients".into())
                })?;
                (Some(ols_solution(&design, &truth.support())?), 0)
            }
            EstimatorKind::AdlAdf => (None, 0),
        };
        let rep = match solution {
            Some(sol) => {
                let nc = nowcast_one(&design, &sol, &panel)?;
                let sel = match &truth {
                    Some(t) => Some(selection_metrics(&sol, t)?),
                    None => None,
                };
                if kind == EstimatorKind::Specs1 {
                    specs1_support = Some(sol.support());
                }
                EstimatorRep {
                    estimator: kind,
                    nowcast: nc.level,
                    error: realized - nc.level,
                    has_levels: sol.has_levels(),
                    df: sol.df(),
                    pcs: sel.and_then(|s| s.pcs),
                    pics: sel.and_then(|s| s.pics),
                    converged: sol.converged,
                    n_unconverged,
                }
            }
            None => {
                let s = &cfg.settings;
                let fit = adl_adf_fit(&fit_panel, spec.p, spec.deterministic, &s.weights, &s.grid, &s.solver)?;
                let nc = fit.nowcast_last(&panel)?;
                EstimatorRep {
                    estimator: kind,
                    nowcast: nc.level,
                    error: realized - nc.level,
                    has_levels: false,
                    df: fit.solution.df(),
                    pcs: None,
                    pics: None,
                    converged: fit.solution.converged,
                    n_unconverged: 0,
                }
            }
        };
        estimators.push(rep);
    }

    let (mut wald, mut wald_ps) = (None, None);
    if cfg.wald {
        if design.n_coef() + design.d.ncols() < design.n_obs() {
            wald = Some(wald_test(&design, None, cfg.wald_draws, wald_seed)?);
        }
        if let Some(support) = &specs1_support {
            wald_ps = Some(wald_test(&design, Some(support), cfg.wald_draws, wald_seed)?);
        }
    }
    Ok(RepOutcome { rep, seed, estimators, wald, wald_ps })
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

fn wald_summary(results: impl Iterator<Item = WaldResult>) -> Option<WaldSummary> {
    let (mut rej, mut n) = (0usize, 0usize);
    for r in results {
        rej += r.reject as usize;
        n += 1;
    }
    (n > 0).then(|| WaldSummary { rejection_rate: rej as f64 / n as f64, n_tests: n })
}

/// Replication `r` uses seed `base_seed + r`. Failed replications are listed
/// and excluded from every aggregate.
pub fn run_monte_carlo(spec: &DgpSpec, cfg: &McConfig) -> Result<MetricsReport> {
    spec.validate()?;
    if cfg.n_reps == 0 {
        return Err(SpecsError::InvalidInput("n_reps must be at least 1".into()));
    }
    if cfg.estimators.is_empty() {
        return Err(SpecsError::InvalidInput("no estimators requested".into()));
    }
    cfg.settings.solver.validate()?;
    let baseline = if spec.family.is_vecm() { EstimatorKind::OlsOracle } else { EstimatorKind::Adl };
    if !spec.family.is_vecm() && cfg.estimators.contains(&EstimatorKind::OlsOracle) {
        return Err(SpecsError::InvalidInput(format!(
            "ols-oracle is undefined for {}; the baseline there is adl",
            spec.family
        )));
    }
    let mut estimators = Vec::new();
    for &k in &cfg.estimators {
        if !estimators.contains(&k) {
            estimators.push(k);
        }
    }
    if !estimators.contains(&baseline) {
        estimators.push(baseline);
    }
    let cfg = McConfig { estimators: estimators.clone(), ..cfg.clone() };
    let wald_seed = cfg.base_seed;

    let work = || -> Vec<Result<RepOutcome>> {
        (0..cfg.n_reps).into_par_iter().map(|r| run_rep(spec, &cfg, r, wald_seed)).collect()
    };
    let outcomes = match cfg.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| SpecsError::InvalidInput(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let seeds: Vec<u64> = (0..cfg.n_reps).map(|r| cfg.base_seed.wrapping_add(r as u64)).collect();
    let mut reps = Vec::new();
    let mut failures = Vec::new();
    for (r, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(o) => reps.push(o),
            Err(e) => failures.push(RepFailure { rep: r, seed: seeds[r], error: e.to_string() }),
        }
    }

    let column = |k: usize| reps.iter().map(move |o| &o.estimators[k]);
    let bi = estimators.iter().position(|&k| k == baseline).expect("baseline added above");
    let base_msne = mean(column(bi).map(|e| e.error * e.error));
    let summaries = estimators
        .iter()
        .enumerate()
        .map(|(k, &kind)| {
            let msne = mean(column(k).map(|e| e.error * e.error));
            let penalized = matches!(kind, EstimatorKind::Specs1 | EstimatorKind::Specs2);
            EstimatorSummary {
                estimator: kind,
                msne,
                rmsne_abs: msne.map(f64::sqrt),
                rmsne: match (msne, base_msne) {
                    (Some(m), Some(b)) if b > 0.0 => Some((m / b).sqrt()),
                    _ => None,
                },
                pseudo_power: if penalized { mean(column(k).map(|e| e.has_levels as u8 as f64)) } else { None },
                pcs: mean(column(k).filter_map(|e| e.pcs)),
                pics: mean(column(k).filter_map(|e| e.pics)),
                mean_df: mean(column(k).map(|e| e.df as f64)),
                n_unconverged_selected: column(k).filter(|e| !e.converged).count(),
            }
        })
        .collect();

    let mut notes = Vec::new();
    if !spec.family.is_vecm() && spec.factor.dynamics {
        notes.push(format!(
            "idiosyncratic dynamics use diagonal A1 = {} I and B1 = {} I",
            spec.factor.idio_ar, spec.factor.idio_ma
        ));
    }

    Ok(MetricsReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        spec: *spec,
        estimators,
        baseline,
        n_reps: cfg.n_reps,
        n_ok: reps.len(),
        n_failed: failures.len(),
        base_seed: cfg.base_seed,
        seeds,
        failures,
        summaries,
        wald: wald_summary(reps.iter().filter_map(|o| o.wald)),
        wald_ps: wald_summary(reps.iter().filter_map(|o| o.wald_ps)),
        notes,
        reps,
    })
}
