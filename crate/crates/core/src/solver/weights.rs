use serde::{Deserialize, Serialize};

use crate::design::CecmDesign;
use crate::error::{Result, SpecsError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveWeights {
    /// One weight per coefficient; `f64::INFINITY` pins the coefficient at zero.
    #[serde(serialize_with = "serialize_weights")]
    pub omega: Vec<f64>,
    pub k_delta: f64,
    pub k_pi: f64,
}

fn serialize_weights<S: serde::Serializer>(w: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(w.len()))?;
    for x in w {
        if x.is_finite() {
            seq.serialize_element(&Some(*x))?;
        } else {
            seq.serialize_element(&None::<f64>)?;
        }
    }
    seq.end()
}

impl AdaptiveWeights {
    /// All weights equal to one (plain lasso / group lasso).
    pub fn uniform(k: usize) -> Self {
        Self {
            omega: vec![1.0; k],
            k_delta: 1.0,
            k_pi: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn excluded(&self) -> Vec<usize> {
        (0..self.omega.len()).filter(|&i| self.omega[i].is_infinite()).collect()
    }

    pub fn is_free(&self, i: usize) -> bool {
        self.omega[i].is_finite()
    }

    /// Pin the given coefficients at zero.
    pub fn exclude(mut self, idx: impl IntoIterator<Item = usize>) -> Self {
        for i in idx {
            self.omega[i] = f64::INFINITY;
        }
        self
    }
}

/// `ω_i = |init_i|^{-k}` with `k_delta` on the first `n_levels` entries and
/// `k_pi` elsewhere. Exact zeros map to `+∞`.
pub fn compute_weights(init: &[f64], k_delta: f64, k_pi: f64, n_levels: usize) -> Result<AdaptiveWeights> {
    if !(k_delta > 0.0) || !(k_pi > 0.0) {
        return Err(SpecsError::InvalidInput("weight exponents must be positive".into()));
    }
    if n_levels > init.len() {
        return Err(SpecsError::DimensionMismatch(format!(
            "{n_levels} levels but only {} initial estimates",
            init.len()
        )));
    }
    let omega = init
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            if g == 0.0 {
                f64::INFINITY
            } else {
                let k = if i < n_levels { k_delta } else { k_pi };
                g.abs().powf(-k)
            }
        })
        .collect();
    Ok(AdaptiveWeights { omega, k_delta, k_pi })
}

/// Smallest `λ_I` at which `γ = 0` is optimal when `λ_G = 0`.
pub fn lambda_max_i(design: &CecmDesign, weights: &AdaptiveWeights) -> Result<f64> {
    if weights.len() != design.n_coef() {
        return Err(SpecsError::DimensionMismatch(format!(
            "{} weights for {} coefficients",
            weights.len(),
            design.n_coef()
        )));
    }
    let mut best: Option<f64> = None;
    for i in 0..weights.len() {
        let w = weights.omega[i];
        if w.is_infinite() {
            continue;
        }
        let g = 2.0 * design.v_proj.column(i).dot(&design.dy_proj).abs();
        let ratio = if w == 0.0 {
            if g == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            g / w
        };
        best = Some(best.map_or(ratio, |b| b.max(ratio)));
    }
    best.ok_or_else(|| SpecsError::InvalidInput("all coefficients are excluded".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_lambda_i: usize,
    pub n_lambda_g: usize,
    pub eps_ratio: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_lambda_i: 100,
            n_lambda_g: 10,
            eps_ratio: 1e-4,
        }
    }
}

impl GridSpec {
    /// Individual penalty only.
    pub fn individual(self) -> Self {
        Self { n_lambda_g: 1, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PenaltyGrid {
    /// Strictly decreasing.
    pub lambda_i: Vec<f64>,
    /// Strictly increasing, starting at 0.
    pub lambda_g: Vec<f64>,
}

impl PenaltyGrid {
    pub fn new(lambda_i: Vec<f64>, lambda_g: Vec<f64>) -> Result<Self> {
        let finite = lambda_i.iter().chain(lambda_g.iter()).all(|x| x.is_finite() && *x >= 0.0);
        if !finite || lambda_i.is_empty() || lambda_g.is_empty() {
            return Err(SpecsError::InvalidInput(
                "penalty grid must be nonempty, finite and nonnegative".into(),
            ));
        }
        if lambda_i.windows(2).any(|w| w[1] >= w[0]) {
            return Err(SpecsError::InvalidInput("lambda_I must be strictly decreasing".into()));
        }
        if lambda_g.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SpecsError::InvalidInput("lambda_G must be strictly increasing".into()));
        }
        Ok(Self { lambda_i, lambda_g })
    }

    pub fn len(&self) -> usize {
        self.lambda_i.len() * self.lambda_g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid pairs in path order: outer λ_G, inner λ_I descending.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.lambda_g
            .iter()
            .flat_map(|&g| self.lambda_i.iter().map(move |&l| (l, g)))
            .collect()
    }
}

fn log_space(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let (lh, ll) = (hi.ln(), lo.ln());
    (0..n)
        .map(|k| {
            if k == 0 {
                hi
            } else if k == n - 1 {
                lo
            } else {
                (lh + (ll - lh) * k as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

pub fn build_grid(design: &CecmDesign, weights: &AdaptiveWeights, spec: &GridSpec) -> Result<PenaltyGrid> {
    if spec.n_lambda_i < 2 {
        return Err(SpecsError::InvalidInput("n_lambda_i must be at least 2".into()));
    }
    if spec.n_lambda_g < 1 || !(spec.eps_ratio > 0.0 && spec.eps_ratio < 1.0) {
        return Err(SpecsError::InvalidInput(
            "n_lambda_g must be positive and eps_ratio in (0, 1)".into(),
        ));
    }
    let lmax = lambda_max_i(design, weights)?;
    if !(lmax > 0.0) || !lmax.is_finite() {
        return Err(SpecsError::Degenerate(format!(
            "lambda_max_I = {lmax}; response is orthogonal to every free regressor"
        )));
    }
    let lambda_i = log_space(lmax, spec.eps_ratio * lmax, spec.n_lambda_i);

    let mut lambda_g = vec![0.0];
    if spec.n_lambda_g > 1 {
        let zty = design.levels_proj().transpose() * &design.dy_proj;
        let g = 2.0 * zty.norm();
        if g > 0.0 {
            lambda_g.extend(log_space(1e-3 * g, g, spec.n_lambda_g - 1));
        }
    }
    PenaltyGrid::new(lambda_i, lambda_g)
}
