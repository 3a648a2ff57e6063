use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::design::{implied_single_equation, DeterministicSpec, ImpliedSingleEq, TimeSeriesPanel, VecmParams};
use crate::error::{Result, SpecsError};
use crate::linalg;

/// Spectral radius above which a generated system counts as explosive.
pub const EXPLOSIVE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpFamily {
    Table2LowWe,
    Table2LowNowe,
    Table2HighWe,
    Table2HighNowe,
    Table3YI0,
    Table3YI1,
    NonsparseVecm,
    FactorModel,
}

impl DgpFamily {
    pub const ALL: [DgpFamily; 8] = [
        DgpFamily::Table2LowWe,
        DgpFamily::Table2LowNowe,
        DgpFamily::Table2HighWe,
        DgpFamily::Table2HighNowe,
        DgpFamily::Table3YI0,
        DgpFamily::Table3YI1,
        DgpFamily::NonsparseVecm,
        DgpFamily::FactorModel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DgpFamily::Table2LowWe => "table2_low_we",
            DgpFamily::Table2LowNowe => "table2_low_nowe",
            DgpFamily::Table2HighWe => "table2_high_we",
            DgpFamily::Table2HighNowe => "table2_high_nowe",
            DgpFamily::Table3YI0 => "table3_y_i0",
            DgpFamily::Table3YI1 => "table3_y_i1",
            DgpFamily::NonsparseVecm => "nonsparse_vecm",
            DgpFamily::FactorModel => "factor_model",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Self::ALL.into_iter().find(|f| f.name() == key).ok_or_else(|| {
            SpecsError::InvalidInput(format!(
                "unknown family '{s}'; valid families: {}",
                Self::ALL.map(|f| f.name()).join(", ")
            ))
        })
    }

    pub fn n_series(self) -> usize {
        match self {
            DgpFamily::Table2LowWe | DgpFamily::Table2LowNowe => 10,
            DgpFamily::NonsparseVecm => 15,
            _ => 50,
        }
    }

    pub fn is_vecm(self) -> bool {
        self != DgpFamily::FactorModel
    }
}

impl fmt::Display for DgpFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Persistence {
    #[default]
    Low,
    High,
}

impl Persistence {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Persistence::Low),
            "high" => Ok(Persistence::High),
            other => Err(SpecsError::InvalidInput(format!("persistence '{other}' is not low or high"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorParams {
    /// Autoregressive coefficient of the common factor.
    pub phi: f64,
    /// ARMA(1,1) dynamics in factor and idiosyncratic shocks.
    pub dynamics: bool,
    pub alpha2: f64,
    pub beta2: f64,
    /// Diagonal value of `A_1` and `B_1` in the dynamic case.
    pub idio_ar: f64,
    pub idio_ma: f64,
}

impl Default for FactorParams {
    fn default() -> Self {
        Self { phi: 1.0, dynamics: false, alpha2: 0.4, beta2: 0.4, idio_ar: 0.4, idio_ma: 0.4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub family: DgpFamily,
    /// Adjustment multiplier in `[-0.5, 0]`.
    pub a: f64,
    pub persistence: Persistence,
    /// Observations returned.
    pub t: usize,
    pub burn_in: usize,
    pub p: usize,
    pub deterministic: DeterministicSpec,
    pub factor: FactorParams,
}

impl DgpSpec {
    pub fn new(family: DgpFamily, a: f64, t: usize) -> Self {
        Self {
            family,
            a,
            persistence: Persistence::Low,
            t,
            burn_in: 200,
            p: 1,
            deterministic: DeterministicSpec::ConstantAndTrend,
            factor: FactorParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-0.5..=0.0).contains(&self.a) {
            return Err(SpecsError::InvalidInput(format!("a = {} outside [-0.5, 0]", self.a)));
        }
        if self.t < 50 {
            return Err(SpecsError::InvalidInput(format!("T = {} is below 50", self.t)));
        }
        if self.p == 0 {
            return Err(SpecsError::InvalidInput("the model needs at least one lagged difference".into()));
        }
        if !self.factor.phi.is_finite() || self.factor.phi.abs() > 1.0 {
            return Err(SpecsError::InvalidInput("factor phi must lie in [-1, 1]".into()));
        }
        Ok(())
    }
}

/// `(1, -1, -1, -1, -1)'`.
fn iota_tilde() -> DVector<f64> {
    DVector::from_vec(vec![1.0, -1.0, -1.0, -1.0, -1.0])
}

fn place(target: &mut DMatrix<f64>, block: &DMatrix<f64>, row: usize, col: usize) {
    target.view_mut((row, col), block.shape()).copy_from(block);
}

/// `I_k ⊗ ι̃`.
fn stacked_iota(k: usize) -> DMatrix<f64> {
    let it = iota_tilde();
    let mut m = DMatrix::zeros(5 * k, k);
    for j in 0..k {
        m.view_mut((5 * j, j), (5, 1)).copy_from(&it);
    }
    m
}

pub fn toeplitz_covariance(n: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

/// Random covariance with eigenvalues 0.01 and 1 at the extremes and
/// Uniform(0.1, 1) in between, rotated by an orthonormalized uniform matrix.
pub fn chang_covariance_with(n: usize, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(SpecsError::InvalidInput("covariance dimension must be at least 2".into()));
    }
    let unif = Uniform::new(0.0, 1.0).expect("valid range");
    let mid = Uniform::new(0.1, 1.0).expect("valid range");
    for _ in 0..100 {
        let u = DMatrix::from_fn(n, n, |_, _| rng.sample(unif));
        let utu = u.transpose() * &u;
        let Ok(root) = linalg::inv_sqrt_spd(&utu) else { continue };
        let h = &u * root;
        if (h.transpose() * &h - DMatrix::identity(n, n)).amax() > 1e-10 {
            continue;
        }
        let mut eig: Vec<f64> = (0..n - 2).map(|_| rng.sample(mid)).collect();
        eig.push(0.01);
        eig.push(1.0);
        eig.sort_by(f64::total_cmp);
        let sigma = &h * DMatrix::from_diagonal(&DVector::from_vec(eig)) * h.transpose();
        return Ok((&sigma + sigma.transpose()) * 0.5);
    }
    Err(SpecsError::Singular("could not draw a well-conditioned rotation".into()))
}

pub fn chang_covariance(n: usize, seed: u64) -> Result<DMatrix<f64>> {
    chang_covariance_with(n, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// VECM parameters of a family. Random components (persistence draws,
/// covariance) come from `rng`.
pub fn vecm_params(spec: &DgpSpec, rng: &mut impl Rng) -> Result<VecmParams> {
    let family = spec.family;
    if !family.is_vecm() {
        return Err(SpecsError::InvalidInput(format!("{family} is not a VECM family")));
    }
    let n = family.n_series();
    let a = spec.a;
    let persistence_draw = |rng: &mut dyn rand::RngCore| match spec.persistence {
        Persistence::Low => 1.0,
        Persistence::High => rng.sample(Uniform::new(0.0, 0.2).expect("valid range")),
    };
    let (alpha, beta, sigma) = match family {
        DgpFamily::Table2LowWe | DgpFamily::Table2HighWe => {
            let mut b = DMatrix::zeros(n, 1);
            place(&mut b, &stacked_iota(1), 0, 0);
            let mut alpha = DMatrix::zeros(n, 1);
            alpha[(0, 0)] = a;
            (alpha, b, toeplitz_covariance(n, 0.8))
        }
        DgpFamily::Table2LowNowe | DgpFamily::Table2HighNowe => {
            let r = if family == DgpFamily::Table2LowNowe { 2 } else { 3 };
            let mut b = DMatrix::zeros(n, r);
            place(&mut b, &stacked_iota(r), 0, 0);
            (&b * a, b, toeplitz_covariance(n, 0.8))
        }
        DgpFamily::Table3YI0 => {
            let mut alpha = DMatrix::zeros(n, 28);
            let mut b = DMatrix::zeros(n, 28);
            alpha[(0, 0)] = 1.0;
            b[(0, 0)] = -persistence_draw(rng);
            let bstar = stacked_iota(3);
            place(&mut alpha, &(&bstar * a), 1, 1);
            place(&mut b, &bstar, 1, 1);
            for i in 0..24 {
                alpha[(26 + i, 4 + i)] = 1.0;
                b[(26 + i, 4 + i)] = -persistence_draw(rng);
            }
            (alpha, b, toeplitz_covariance(n, 0.8))
        }
        DgpFamily::Table3YI1 => {
            let mut alpha = DMatrix::zeros(n, 28);
            let mut b = DMatrix::zeros(n, 28);
            let bstar = stacked_iota(3);
            place(&mut alpha, &(&bstar * a), 0, 0);
            place(&mut b, &bstar, 0, 0);
            for i in 0..25 {
                alpha[(25 + i, 3 + i)] = 1.0;
                b[(25 + i, 3 + i)] = -persistence_draw(rng);
            }
            (alpha, b, toeplitz_covariance(n, 0.8))
        }
        DgpFamily::NonsparseVecm => {
            let b = stacked_iota(3);
            (&b * a, b, chang_covariance_with(n, rng)?)
        }
        DgpFamily::FactorModel => unreachable!("checked above"),
    };
    let params = VecmParams {
        a: alpha,
        b: beta,
        phi: vec![DMatrix::identity(n, n) * 0.4],
        sigma_eps: sigma,
        mu: DVector::zeros(n),
        tau: DVector::zeros(n),
    };
    params.validate()?;
    Ok(params)
}

/// Spectral radius of the companion matrix of the VAR form of a VECM.
pub fn companion_radius(params: &VecmParams) -> f64 {
    let n = params.n_series();
    let p = params.phi.len();
    let k = n * (p + 1);
    let mut c = DMatrix::zeros(k, k);
    let mut a1 = DMatrix::identity(n, n) + params.pi();
    if let Some(phi1) = params.phi.first() {
        a1 += phi1;
    }
    place(&mut c, &a1, 0, 0);
    for j in 1..=p {
        let next = params.phi.get(j).cloned().unwrap_or_else(|| DMatrix::zeros(n, n));
        let block = next - &params.phi[j - 1];
        place(&mut c, &block, 0, n * j);
    }
    for j in 0..p {
        place(&mut c, &DMatrix::identity(n, n), n * (j + 1), n * j);
    }
    linalg::spectral_radius(&c)
}

/// Simulate `T` observations after `burn_in` discarded periods from `z_0 = 0`.
pub fn simulate_vecm(params: &VecmParams, t: usize, burn_in: usize, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    let radius = companion_radius(params);
    if radius > 1.0 + EXPLOSIVE_TOL {
        return Err(SpecsError::Explosive(radius));
    }
    let n = params.n_series();
    let chol = params
        .sigma_eps
        .clone()
        .cholesky()
        .ok_or_else(|| SpecsError::Singular("error covariance is not positive definite".into()))?;
    let l = chol.l();
    let pi = params.pi();
    let p = params.phi.len();
    let total = burn_in + t;
    let mut z = DVector::zeros(n);
    let mut diffs: Vec<DVector<f64>> = vec![DVector::zeros(n); p];
    let mut out = DMatrix::zeros(t, n);
    for step in 0..total {
        let e = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut dz = &pi * &z + &l * e;
        for (phi, d) in params.phi.iter().zip(&diffs) {
            dz += phi * d;
        }
        z += &dz;
        if p > 0 {
            diffs.rotate_right(1);
            diffs[0] = dz;
        }
        if step >= burn_in {
            out.set_row(step - burn_in, &z.transpose());
        }
    }
    Ok(out)
}

/// Panel of `spec.t` observations and the true single-equation coefficients.
pub fn gen_vecm(spec: &DgpSpec, seed: u64) -> Result<(TimeSeriesPanel, ImpliedSingleEq)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = vecm_params(spec, &mut rng)?;
    let truth = implied_single_equation(&params, spec.p)?;
    let values = simulate_vecm(&params, spec.t, spec.burn_in, &mut rng)?;
    Ok((TimeSeriesPanel::from_matrix(values)?, truth))
}

/// Single-factor panel `z = λ f + ω` with 50 series.
pub fn gen_factor(spec: &DgpSpec, seed: u64) -> Result<TimeSeriesPanel> {
    spec.validate()?;
    if spec.family != DgpFamily::FactorModel {
        return Err(SpecsError::InvalidInput(format!("{} is not the factor family", spec.family)));
    }
    let n = spec.family.n_series();
    let fp = spec.factor;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loadings: Vec<f64> = (0..n).map(|_| rng.sample(Uniform::new(0.5, 1.5).expect("valid range"))).collect();
    let theta: Vec<f64> = (0..n).map(|_| rng.sample(Uniform::new(0.2, 0.8).expect("valid range"))).collect();
    let sigma = chang_covariance_with(n, &mut rng)?;
    let l = sigma
        .cholesky()
        .ok_or_else(|| SpecsError::Singular("factor error covariance is not positive definite".into()))?
        .l();
    let (alpha2, beta2, a1, b1) = if fp.dynamics {
        (fp.alpha2, fp.beta2, fp.idio_ar, fp.idio_ma)
    } else {
        (0.0, 0.0, 0.0, 0.0)
    };
    let (mut f, mut zeta, mut e2_prev) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut omega = DVector::<f64>::zeros(n);
    let mut v = DVector::<f64>::zeros(n);
    let mut e1_prev = DVector::<f64>::zeros(n);
    let mut out = DMatrix::zeros(spec.t, n);
    for step in 0..spec.burn_in + spec.t {
        let e2: f64 = rng.sample(StandardNormal);
        zeta = alpha2 * zeta + e2 + beta2 * e2_prev;
        e2_prev = e2;
        f = fp.phi * f + zeta;
        let e1 = &l * DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        v = &v * a1 + &e1 + &e1_prev * b1;
        e1_prev = e1;
        for i in 0..n {
            omega[i] = theta[i] * omega[i] + v[i];
        }
        if step >= spec.burn_in {
            for i in 0..n {
                out[(step - spec.burn_in, i)] = loadings[i] * f + omega[i];
            }
        }
    }
    TimeSeriesPanel::from_matrix(out)
}
