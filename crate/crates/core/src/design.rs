//! Conditional error-correction design construction.
//!
//! A panel of levels `z_t = (y_t, x_t')'` is turned into the single-equation
//! regression of `Δy_t` on `V_t = (z_{t-1}', Δx_t', Δz_{t-1}', …, Δz_{t-p}')'`
//! plus a deterministic block. The deterministic block is removed by projection
//! so every estimator downstream works on `M·Δy` and `M·V`.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpecsError};
use crate::linalg;

/// Entries whose magnitude falls below this are treated as exact zeros.
pub const EXACT_ZERO: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    values: DMatrix<f64>,
    target_index: usize,
    labels: Vec<String>,
    row_labels: Option<Vec<String>>,
}

impl TimeSeriesPanel {
    pub fn new(values: DMatrix<f64>, target_index: usize, labels: Vec<String>) -> Result<Self> {
        let (t, n) = values.shape();
        if t < 2 || n < 1 {
            return Err(SpecsError::InvalidInput(format!(
                "panel needs at least 2 observations and 1 series, got {t} x {n}"
            )));
        }
        if target_index >= n {
            return Err(SpecsError::InvalidInput(format!(
                "target index {target_index} out of range for {n} series"
            )));
        }
        if labels.len() != n {
            return Err(SpecsError::DimensionMismatch(format!(
                "{} labels for {n} series",
                labels.len()
            )));
        }
        for j in 0..n {
            for i in 0..t {
                if !values[(i, j)].is_finite() {
                    return Err(SpecsError::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self {
            values,
            target_index,
            labels,
            row_labels: None,
        })
    }

    /// Panel with generated labels `y, x1, …` and the target in column 0.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let n = values.ncols();
        let labels = (0..n)
            .map(|j| if j == 0 { "y".to_string() } else { format!("x{j}") })
            .collect();
        Self::new(values, 0, labels)
    }

    pub fn with_row_labels(mut self, row_labels: Vec<String>) -> Result<Self> {
        if row_labels.len() != self.n_obs() {
            return Err(SpecsError::DimensionMismatch(format!(
                "{} row labels for {} observations",
                row_labels.len(),
                self.n_obs()
            )));
        }
        self.row_labels = Some(row_labels);
        Ok(self)
    }

    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_series(&self) -> usize {
        self.values.ncols()
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn row_labels(&self) -> Option<&[String]> {
        self.row_labels.as_deref()
    }

    /// Original column indices in `(y, x')` order.
    pub fn z_order(&self) -> Vec<usize> {
        std::iter::once(self.target_index)
            .chain((0..self.n_series()).filter(|&j| j != self.target_index))
            .collect()
    }

    /// Labels in `(y, x')` order.
    pub fn z_labels(&self) -> Vec<String> {
        self.z_order().into_iter().map(|j| self.labels[j].clone()).collect()
    }

    /// Element `k` of `z_t` (k = 0 is the target).
    #[inline]
    pub fn z(&self, t: usize, k: usize) -> f64 {
        let col = if k == 0 {
            self.target_index
        } else if k <= self.target_index {
            k - 1
        } else {
            k
        };
        self.values[(t, col)]
    }

    pub fn target_series(&self) -> Vec<f64> {
        self.values.column(self.target_index).iter().copied().collect()
    }

    /// Contiguous block of `len` observations starting at `start`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.n_obs() {
            return Err(SpecsError::InsufficientRows {
                needed: start + len,
                available: self.n_obs(),
            });
        }
        let values = self.values.rows(start, len).into_owned();
        let mut out = Self::new(values, self.target_index, self.labels.clone())?;
        if let Some(rl) = &self.row_labels {
            out.row_labels = Some(rl[start..start + len].to_vec());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeterministicSpec {
    None,
    Constant,
    #[default]
    ConstantAndTrend,
}

impl DeterministicSpec {
    pub fn ncols(self) -> usize {
        match self {
            DeterministicSpec::None => 0,
            DeterministicSpec::Constant => 1,
            DeterministicSpec::ConstantAndTrend => 2,
        }
    }

    /// Deterministic regressors for the observation at absolute time `a`;
    /// the trend carries `a - 1`.
    pub fn row(self, a: usize) -> Vec<f64> {
        match self {
            DeterministicSpec::None => vec![],
            DeterministicSpec::Constant => vec![1.0],
            DeterministicSpec::ConstantAndTrend => vec![1.0, a as f64 - 1.0],
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "const" | "constant" => Ok(Self::Constant),
            "trend" | "constant_and_trend" => Ok(Self::ConstantAndTrend),
            other => Err(SpecsError::InvalidInput(format!(
                "unknown deterministic specification '{other}' (expected none, const or trend)"
            ))),
        }
    }
}

/// The single-equation regression `Δy = Vγ + Dθ + ε` and its projected copies.
#[derive(Debug, Clone)]
pub struct CecmDesign {
    pub dy: DVector<f64>,
    pub v: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub dy_proj: DVector<f64>,
    pub v_proj: DMatrix<f64>,
    pub p: usize,
    pub n_series: usize,
    /// Width of the lagged-level block at the front of `v` (the group-penalized block).
    pub n_levels: usize,
    pub deterministic: DeterministicSpec,
    pub column_labels: Vec<String>,
}

impl CecmDesign {
    pub fn n_obs(&self) -> usize {
        self.dy.len()
    }

    pub fn n_coef(&self) -> usize {
        self.v.ncols()
    }

    /// Length of the non-level block (M for a full CECM design).
    pub fn n_short_run(&self) -> usize {
        self.v.ncols() - self.n_levels
    }

    /// Lagged-level columns of the projected design.
    pub fn levels_proj(&self) -> DMatrix<f64> {
        self.v_proj.columns(0, self.n_levels).into_owned()
    }

    /// Build a design from raw pieces (used for non-CECM regressions such as
    /// the pre-tested ADL). Projection is applied immediately.
    pub fn from_parts(
        dy: DVector<f64>,
        v: DMatrix<f64>,
        deterministic: DeterministicSpec,
        time_offset: usize,
        n_levels: usize,
        column_labels: Vec<String>,
        p: usize,
        n_series: usize,
    ) -> Result<Self> {
        if v.nrows() != dy.len() {
            return Err(SpecsError::DimensionMismatch(format!(
                "{} regressor rows for {} responses",
                v.nrows(),
                dy.len()
            )));
        }
        let t_eff = dy.len();
        let dcols = deterministic.ncols();
        let d = DMatrix::from_fn(t_eff, dcols, |r, c| deterministic.row(r + time_offset)[c]);
        let design = Self {
            dy_proj: dy.clone(),
            v_proj: v.clone(),
            dy,
            v,
            d,
            p,
            n_series,
            n_levels,
            deterministic,
            column_labels,
        };
        project_out(&design)
    }
}

/// Regressors `(z_{a-1}, Δx_a, Δz_{a-1}, …, Δz_{a-p})` for absolute time `a ≥ p + 1`.
pub fn regressor_row(panel: &TimeSeriesPanel, a: usize, p: usize) -> Vec<f64> {
    let n = panel.n_series();
    let mut row = Vec::with_capacity(n * (p + 2) - 1);
    row.extend((0..n).map(|k| panel.z(a - 1, k)));
    row.extend((1..n).map(|k| panel.z(a, k) - panel.z(a - 1, k)));
    for j in 1..=p {
        row.extend((0..n).map(|k| panel.z(a - j, k) - panel.z(a - j - 1, k)));
    }
    row
}

pub fn cecm_column_labels(panel: &TimeSeriesPanel, p: usize) -> Vec<String> {
    let z = panel.z_labels();
    let mut out: Vec<String> = z.iter().map(|l| format!("L1.{l}")).collect();
    out.extend(z.iter().skip(1).map(|l| format!("D.{l}")));
    for j in 1..=p {
        out.extend(z.iter().map(|l| format!("LD{j}.{l}")));
    }
    out
}

pub fn build_cecm_design(
    panel: &TimeSeriesPanel,
    p: usize,
    det: DeterministicSpec,
) -> Result<CecmDesign> {
    let t = panel.n_obs();
    let n = panel.n_series();
    let d = det.ncols();
    if t <= p + 1 + d {
        return Err(SpecsError::InsufficientRows {
            needed: p + 1 + d,
            available: t,
        });
    }
    let t_eff = t - p - 1;
    let k = n * (p + 2) - 1;
    let mut v = DMatrix::zeros(t_eff, k);
    let mut dy = DVector::zeros(t_eff);
    for r in 0..t_eff {
        let a = r + p + 1;
        dy[r] = panel.z(a, 0) - panel.z(a - 1, 0);
        for (c, x) in regressor_row(panel, a, p).into_iter().enumerate() {
            v[(r, c)] = x;
        }
    }
    CecmDesign::from_parts(dy, v, det, p + 1, n, cecm_column_labels(panel, p), p, n)
}

/// Orthonormal basis of the column space of `d`, or an error when rank deficient.
fn deterministic_basis(d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let qr = d.clone().qr();
    let r = qr.r();
    let max_diag = r.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max_diag == 0.0 || r.diagonal().iter().any(|v| v.abs() <= 1e-10 * max_diag) {
        return Err(SpecsError::Singular("deterministic block is rank deficient".into()));
    }
    Ok(qr.q())
}

/// Apply `M = I - D(D'D)^{-1}D'` to the raw response and regressors.
pub fn project_out(design: &CecmDesign) -> Result<CecmDesign> {
    let mut out = design.clone();
    if design.d.ncols() == 0 {
        out.dy_proj = design.dy.clone();
        out.v_proj = design.v.clone();
        return Ok(out);
    }
    let q = deterministic_basis(&design.d)?;
    let qt = q.transpose();
    out.dy_proj = &design.dy - &q * (&qt * &design.dy);
    out.v_proj = &design.v - &q * (&qt * &design.v);
    Ok(out)
}

/// Deterministic coefficients `(D'D)^{-1} D'(Δy - Vγ)`.
pub fn recover_theta(design: &CecmDesign, gamma: &DVector<f64>) -> Result<Vec<f64>> {
    if gamma.len() != design.n_coef() {
        return Err(SpecsError::DimensionMismatch(format!(
            "gamma has length {}, design has {} columns",
            gamma.len(),
            design.n_coef()
        )));
    }
    if design.d.ncols() == 0 {
        return Ok(vec![]);
    }
    deterministic_basis(&design.d)?;
    let resid = &design.dy - &design.v * gamma;
    Ok(linalg::ols_qr(&design.d, &resid)?.iter().copied().collect())
}

/// VECM `Δz_t = AB'(z_{t-1} - μ - τ(t-1)) + τ* + Σ Φ_j Δz_{t-j} + ε_t`.
#[derive(Debug, Clone)]
pub struct VecmParams {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub phi: Vec<DMatrix<f64>>,
    pub sigma_eps: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub tau: DVector<f64>,
}

impl VecmParams {
    pub fn n_series(&self) -> usize {
        self.sigma_eps.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_series();
        if self.sigma_eps.ncols() != n {
            return Err(SpecsError::DimensionMismatch("Sigma_eps must be square".into()));
        }
        if self.a.nrows() != n || self.b.nrows() != n {
            return Err(SpecsError::DimensionMismatch(format!(
                "A and B must have {n} rows"
            )));
        }
        if self.a.ncols() != self.b.ncols() {
            return Err(SpecsError::DimensionMismatch(
                "A and B must have equal column counts".into(),
            ));
        }
        if self.phi.iter().any(|m| m.shape() != (n, n)) {
            return Err(SpecsError::DimensionMismatch("each Phi_j must be N x N".into()));
        }
        if self.mu.len() != n || self.tau.len() != n {
            return Err(SpecsError::DimensionMismatch("mu and tau must have length N".into()));
        }
        if (&self.sigma_eps - self.sigma_eps.transpose()).amax() > 1e-10 * self.sigma_eps.amax() {
            return Err(SpecsError::InvalidInput("Sigma_eps is not symmetric".into()));
        }
        if linalg::min_eigenvalue(&self.sigma_eps) <= 0.0 {
            return Err(SpecsError::InvalidInput("Sigma_eps is not positive definite".into()));
        }
        Ok(())
    }

    /// `A B'`.
    pub fn pi(&self) -> DMatrix<f64> {
        &self.a * self.b.transpose()
    }
}

/// True coefficients of the single-equation model implied by a VECM.
#[derive(Debug, Clone, Serialize)]
pub struct ImpliedSingleEq {
    pub pi0: Vec<f64>,
    pub delta: Vec<f64>,
    pub pi: Vec<f64>,
    pub mu0: f64,
    pub tau0: f64,
    pub s_delta: Vec<usize>,
    pub s_pi: Vec<usize>,
}

impl ImpliedSingleEq {
    /// `γ = (δ', π')'`.
    pub fn gamma(&self) -> Vec<f64> {
        self.delta.iter().chain(self.pi.iter()).copied().collect()
    }

    /// Support of γ, with π indices shifted past the level block.
    pub fn support(&self) -> Vec<usize> {
        let n = self.delta.len();
        self.s_delta
            .iter()
            .copied()
            .chain(self.s_pi.iter().map(|&j| j + n))
            .collect()
    }
}

fn nonzero_indices(v: &[f64]) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, x)| x.abs() >= EXACT_ZERO)
        .map(|(i, _)| i)
        .collect()
}

pub fn implied_single_equation(vecm: &VecmParams, p: usize) -> Result<ImpliedSingleEq> {
    vecm.validate()?;
    if vecm.phi.len() > p {
        return Err(SpecsError::InvalidInput(format!(
            "VECM has {} lagged differences but the single equation uses p = {p}",
            vecm.phi.len()
        )));
    }
    let n = vecm.n_series();
    let sigma21 = vecm.sigma_eps.view((1, 0), (n - 1, 1)).column(0).into_owned();
    let sigma22 = vecm.sigma_eps.view((1, 1), (n - 1, n - 1)).into_owned();
    let pi0 = linalg::spd_solve(&sigma22, &sigma21)
        .map_err(|_| SpecsError::Singular("Sigma_22 is singular".into()))?;

    let mut c = DVector::zeros(n);
    c[0] = 1.0;
    c.rows_mut(1, n - 1).copy_from(&(-&pi0));

    let ab = vecm.pi();
    let delta = ab.transpose() * &c;

    let mut pi: Vec<f64> = pi0.iter().copied().collect();
    for j in 0..p {
        match vecm.phi.get(j) {
            Some(phi) => pi.extend((phi.transpose() * &c).iter()),
            None => pi.extend(std::iter::repeat_n(0.0, n)),
        }
    }

    let phi_sum = vecm
        .phi
        .iter()
        .fold(DMatrix::<f64>::zeros(n, n), |acc, m| acc + m);
    let tau_star = (DMatrix::<f64>::identity(n, n) - phi_sum) * &vecm.tau;
    let mu0 = c.dot(&(tau_star - &ab * &vecm.mu));
    let tau0 = -c.dot(&(&ab * &vecm.tau));

    let delta: Vec<f64> = delta.iter().copied().collect();
    Ok(ImpliedSingleEq {
        s_delta: nonzero_indices(&delta),
        s_pi: nonzero_indices(&pi),
        pi0: pi0.iter().copied().collect(),
        delta,
        pi,
        mu0,
        tau0,
    })
}

/// Rotate the relevant projected regressors into stationary and integrated parts:
/// `[Z_{S_δ} B, W_{S_π}, Z_{S_δ} B_⊥]`, with `B_⊥` columns scaled to unit ℓ1 norm.
pub fn q_transform(
    design: &CecmDesign,
    s_delta: &[usize],
    s_pi: &[usize],
    b_basis: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if b_basis.nrows() != s_delta.len() {
        return Err(SpecsError::DimensionMismatch(format!(
            "basis has {} rows, S_delta has {} elements",
            b_basis.nrows(),
            s_delta.len()
        )));
    }
    if let Some(&bad) = s_delta.iter().find(|&&i| i >= design.n_levels) {
        return Err(SpecsError::InvalidInput(format!("level index {bad} out of range")));
    }
    if let Some(&bad) = s_pi.iter().find(|&&j| j >= design.n_short_run()) {
        return Err(SpecsError::InvalidInput(format!("short-run index {bad} out of range")));
    }
    let z = design.v_proj.select_columns(s_delta);
    let w_idx: Vec<usize> = s_pi.iter().map(|&j| j + design.n_levels).collect();
    let w = design.v_proj.select_columns(&w_idx);

    let mut b_perp = linalg::orthonormal_complement(b_basis)?;
    for mut col in b_perp.column_iter_mut() {
        let l1: f64 = col.iter().map(|x| x.abs()).sum();
        col /= l1;
    }
    let stationary = &z * b_basis;
    let integrated = &z * &b_perp;

    let t = design.n_obs();
    let cols = stationary.ncols() + w.ncols() + integrated.ncols();
    let mut out = DMatrix::zeros(t, cols);
    out.columns_mut(0, stationary.ncols()).copy_from(&stationary);
    out.columns_mut(stationary.ncols(), w.ncols()).copy_from(&w);
    out.columns_mut(stationary.ncols() + w.ncols(), integrated.ncols())
        .copy_from(&integrated);
    Ok(out)
}

/// `S_T^{-1} Q V'MVQ' S_T^{-1}` split into stationary (11) and integrated (22) blocks.
#[derive(Debug, Clone)]
pub struct ScaledCovariance {
    pub matrix: DMatrix<f64>,
    pub s_pi: usize,
    pub s_delta: usize,
}

impl ScaledCovariance {
    pub fn sigma11(&self) -> DMatrix<f64> {
        self.matrix.view((0, 0), (self.s_pi, self.s_pi)).into_owned()
    }

    pub fn sigma12(&self) -> DMatrix<f64> {
        self.matrix.view((0, self.s_pi), (self.s_pi, self.s_delta)).into_owned()
    }

    pub fn sigma22(&self) -> DMatrix<f64> {
        self.matrix
            .view((self.s_pi, self.s_pi), (self.s_delta, self.s_delta))
            .into_owned()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.matrix)
    }
}

/// `rotated` must already be projected (the output of [`q_transform`]).
pub fn scaled_covariance(
    rotated: &DMatrix<f64>,
    s_delta: usize,
    s_pi: usize,
    t: usize,
) -> Result<ScaledCovariance> {
    if rotated.ncols() != s_delta + s_pi {
        return Err(SpecsError::DimensionMismatch(format!(
            "rotated matrix has {} columns, expected s_pi + s_delta = {}",
            rotated.ncols(),
            s_pi + s_delta
        )));
    }
    let tf = t as f64;
    let scale: Vec<f64> = (0..s_pi + s_delta)
        .map(|i| if i < s_pi { tf.sqrt() } else { tf / (s_delta as f64).sqrt() })
        .collect();
    let gram = rotated.transpose() * rotated;
    let matrix = DMatrix::from_fn(gram.nrows(), gram.ncols(), |i, j| {
        gram[(i, j)] / (scale[i] * scale[j])
    });
    Ok(ScaledCovariance {
        matrix,
        s_pi,
        s_delta,
    })
}

/// How the target column is chosen when reading CSV input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetSelector {
    Name(String),
    Index(usize),
}

impl TargetSelector {
    /// Numeric strings select by position, anything else by header name.
    pub fn parse(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => TargetSelector::Index(i),
            Err(_) => TargetSelector::Name(s.to_string()),
        }
    }
}

const DATE_HEADERS: [&str; 6] = ["date", "time", "period", "month", "year", "index"];

/// Read a panel from CSV: a header row, one column per series, and an optional
/// leading date column (detected by header name or a non-numeric first cell).
pub fn read_panel_csv<R: Read>(reader: R, target: &TargetSelector) -> Result<TimeSeriesPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| SpecsError::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let records: Vec<csv::StringRecord> = rdr
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| SpecsError::Csv(e.to_string()))?;
    if records.is_empty() {
        return Err(SpecsError::Csv("no data rows".into()));
    }
    let has_date = headers
        .first()
        .map(|h| DATE_HEADERS.contains(&h.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
        || records[0].get(0).map(|c| c.parse::<f64>().is_err()).unwrap_or(false);
    let first = usize::from(has_date);
    let labels: Vec<String> = headers[first..].to_vec();
    let n = labels.len();
    let t = records.len();
    let mut values = DMatrix::zeros(t, n);
    let mut row_labels = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        if rec.len() != headers.len() {
            return Err(SpecsError::Csv(format!(
                "row {} has {} fields, header has {}",
                i + 2,
                rec.len(),
                headers.len()
            )));
        }
        if has_date {
            row_labels.push(rec[0].to_string());
        }
        for j in 0..n {
            let cell = &rec[j + first];
            let x: f64 = cell.parse().map_err(|_| {
                SpecsError::Csv(format!(
                    "cannot parse '{cell}' at row {}, column {} ('{}')",
                    i + 2,
                    j + first + 1,
                    labels[j]
                ))
            })?;
            if !x.is_finite() {
                return Err(SpecsError::Csv(format!(
                    "non-finite value at row {}, column {} ('{}')",
                    i + 2,
                    j + first + 1,
                    labels[j]
                )));
            }
            values[(i, j)] = x;
        }
    }
    let target_index = match target {
        TargetSelector::Index(i) => *i,
        TargetSelector::Name(name) => labels.iter().position(|l| l == name).ok_or_else(|| {
            SpecsError::InvalidInput(format!("no column named '{name}'"))
        })?,
    };
    let panel = TimeSeriesPanel::new(values, target_index, labels)?;
    if has_date {
        panel.with_row_labels(row_labels)
    } else {
        Ok(panel)
    }
}

pub fn read_panel_csv_path(path: &Path, target: &TargetSelector) -> Result<TimeSeriesPanel> {
    let file = std::fs::File::open(path)?;
    read_panel_csv(file, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_panel(t: usize, n: usize, seed: u64) -> TimeSeriesPanel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::zeros(t, n);
        for j in 0..n {
            let mut level = 0.0;
            for i in 0..t {
                level += rng.random::<f64>() - 0.5;
                m[(i, j)] = level;
            }
        }
        TimeSeriesPanel::from_matrix(m).unwrap()
    }

    fn toeplitz(n: usize, rho: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| rho.powi((i as i32 - j as i32).abs()))
    }

    #[test]
    fn dimensions_match_parameter_count() {
        let panel = random_panel(100, 10, 1);
        let d = build_cecm_design(&panel, 1, DeterministicSpec::ConstantAndTrend).unwrap();
        assert_eq!(d.n_coef(), 29);
        assert_eq!(d.n_coef() + d.d.ncols(), 31);
        assert_eq!(d.n_obs(), 98);
        assert_eq!(d.n_short_run(), 19);
    }

    #[test]
    fn p0_two_series_layout() {
        let m = DMatrix::from_row_slice(4, 2, &[1.0, 10.0, 2.0, 12.0, 4.0, 15.0, 7.0, 19.0]);
        let panel = TimeSeriesPanel::from_matrix(m).unwrap();
        let d = build_cecm_design(&panel, 0, DeterministicSpec::Constant).unwrap();
        assert_eq!(d.n_short_run(), 1);
        // row 0 corresponds to a = 1: (y_0, x_0, Δx_1)
        assert_eq!(d.v.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 10.0, 2.0]);
        assert_eq!(d.dy[0], 1.0);
        assert_eq!(d.dy[2], 3.0);
    }

    #[test]
    fn target_is_reordered_first() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let labels = vec!["a".into(), "b".into(), "c".into()];
        let panel = TimeSeriesPanel::new(m, 1, labels).unwrap();
        assert_eq!(panel.z_order(), vec![1, 0, 2]);
        assert_eq!(panel.z(0, 0), 2.0);
        assert_eq!(panel.z(0, 1), 1.0);
        assert_eq!(panel.z(0, 2), 3.0);
    }

    #[test]
    fn trend_column_aligned_with_lag_order() {
        let panel = random_panel(20, 2, 3);
        let d = build_cecm_design(&panel, 2, DeterministicSpec::ConstantAndTrend).unwrap();
        for r in 0..d.n_obs() {
            assert_eq!(d.d[(r, 1)], (r + 2) as f64);
        }
    }

    #[test]
    fn linear_trend_panel_has_null_difference_block() {
        let m = DMatrix::from_fn(30, 3, |t, j| 1.0 + (j as f64 + 0.5) * t as f64);
        let panel = TimeSeriesPanel::from_matrix(m).unwrap();
        let d = build_cecm_design(&panel, 2, DeterministicSpec::Constant).unwrap();
        let n = 3;
        for c in n..d.n_coef() {
            assert!(d.v_proj.column(c).amax() < 1e-10);
        }
    }

    #[test]
    fn projection_is_orthogonal_to_deterministics() {
        let panel = random_panel(80, 4, 5);
        let d = build_cecm_design(&panel, 2, DeterministicSpec::ConstantAndTrend).unwrap();
        let dt = d.d.transpose();
        let dv = &dt * &d.v_proj;
        for c in 0..d.n_coef() {
            let scale = d.v.column(c).norm().max(1.0) * dt.row(1).norm();
            assert!(dv.column(c).amax() <= 1e-10 * scale);
        }
        assert!((&dt * &d.dy_proj).amax() < 1e-8);
    }

    #[test]
    fn projection_without_deterministics_is_identity() {
        let panel = random_panel(30, 3, 9);
        let d = build_cecm_design(&panel, 1, DeterministicSpec::None).unwrap();
        assert_eq!(d.dy_proj, d.dy);
        assert_eq!(d.v_proj, d.v);
    }

    #[test]
    fn constant_response_projects_to_zero() {
        let panel = random_panel(30, 3, 10);
        let mut d = build_cecm_design(&panel, 1, DeterministicSpec::Constant).unwrap();
        d.dy = DVector::from_element(d.n_obs(), 1.0);
        let d = project_out(&d).unwrap();
        assert!(d.dy_proj.amax() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent() {
        let panel = random_panel(60, 3, 11);
        let once = build_cecm_design(&panel, 1, DeterministicSpec::ConstantAndTrend).unwrap();
        let mut twice = once.clone();
        twice.dy = once.dy_proj.clone();
        twice.v = once.v_proj.clone();
        let twice = project_out(&twice).unwrap();
        assert!((&twice.v_proj - &once.v_proj).amax() < 1e-12 * once.v.amax().max(1.0));
        assert!((&twice.dy_proj - &once.dy_proj).amax() < 1e-12);
    }

    #[test]
    fn theta_is_mean_for_constant_response() {
        let panel = random_panel(30, 3, 12);
        let mut d = build_cecm_design(&panel, 1, DeterministicSpec::Constant).unwrap();
        d.dy = DVector::from_element(d.n_obs(), 3.0);
        let theta = recover_theta(&d, &DVector::zeros(d.n_coef())).unwrap();
        assert_relative_eq!(theta[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn theta_empty_without_deterministics() {
        let panel = random_panel(30, 3, 13);
        let d = build_cecm_design(&panel, 1, DeterministicSpec::None).unwrap();
        assert!(recover_theta(&d, &DVector::zeros(d.n_coef())).unwrap().is_empty());
    }

    #[test]
    fn theta_matches_joint_ols() {
        // Oracle: OLS of Δy on (V, D) jointly.
        let panel = random_panel(200, 3, 14);
        let mut d = build_cecm_design(&panel, 1, DeterministicSpec::ConstantAndTrend).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let gamma = DVector::from_fn(d.n_coef(), |_, _| rng.random::<f64>() - 0.5);
        let noise = DVector::from_fn(d.n_obs(), |_, _| 0.1 * (rng.random::<f64>() - 0.5));
        d.dy = &d.v * &gamma + &d.d * DVector::from_vec(vec![0.7, -0.01]) + noise;
        let d = project_out(&d).unwrap();
        let mut joint = DMatrix::zeros(d.n_obs(), d.n_coef() + 2);
        joint.columns_mut(0, d.n_coef()).copy_from(&d.v);
        joint.columns_mut(d.n_coef(), 2).copy_from(&d.d);
        let ols = linalg::ols_qr(&joint, &d.dy).unwrap();
        let gamma_hat = ols.rows(0, d.n_coef()).into_owned();
        let theta = recover_theta(&d, &gamma_hat).unwrap();
        assert_relative_eq!(theta[0], ols[d.n_coef()], epsilon = 1e-8);
        assert_relative_eq!(theta[1], ols[d.n_coef() + 1], epsilon = 1e-10);
        assert!((theta[0] - 0.7).abs() < 0.1);
    }

    fn table2_we(n: usize, alpha: f64) -> VecmParams {
        let mut a = DMatrix::zeros(n, 1);
        a[(0, 0)] = alpha;
        let mut b = DMatrix::zeros(n, 1);
        b[(0, 0)] = 1.0;
        for i in 1..n.min(5) {
            b[(i, 0)] = -1.0;
        }
        VecmParams {
            a,
            b,
            phi: vec![DMatrix::identity(n, n) * 0.4],
            sigma_eps: toeplitz(n, 0.8),
            mu: DVector::zeros(n),
            tau: DVector::zeros(n),
        }
    }

    #[test]
    fn toeplitz_gives_single_contemporaneous_coefficient() {
        for n in [3, 5, 10, 50] {
            let eq = implied_single_equation(&table2_we(n, -0.5), 1).unwrap();
            assert!((eq.pi0[0] - 0.8).abs() <= 1e-12);
            assert!(eq.pi0[1..].iter().all(|x| x.abs() <= 1e-12));
        }
    }

    #[test]
    fn weakly_exogenous_delta_is_alpha_times_b() {
        let vecm = table2_we(10, -0.5);
        let eq = implied_single_equation(&vecm, 1).unwrap();
        for i in 0..10 {
            assert_relative_eq!(eq.delta[i], -0.5 * vecm.b[(i, 0)], epsilon = 1e-12);
        }
        assert_eq!(eq.s_delta, vec![0, 1, 2, 3, 4]);
        // π: π0 has one entry, π1 = 0.4·(1, -0.8, 0, …)
        assert_eq!(eq.s_pi, vec![0, 9, 10]);
        assert_relative_eq!(eq.pi[9], 0.4, epsilon = 1e-12);
        assert_relative_eq!(eq.pi[10], -0.32, epsilon = 1e-12);
    }

    #[test]
    fn no_cointegration_gives_zero_delta() {
        let mut vecm = table2_we(10, -0.5);
        vecm.a = DMatrix::zeros(10, 1);
        vecm.b = DMatrix::zeros(10, 1);
        let eq = implied_single_equation(&vecm, 1).unwrap();
        assert!(eq.delta.iter().all(|&x| x == 0.0));
        assert!(eq.s_delta.is_empty());
    }

    #[test]
    fn delta_identity_holds() {
        let vecm = table2_we(10, -0.3);
        let eq = implied_single_equation(&vecm, 1).unwrap();
        let mut c = DVector::zeros(10);
        c[0] = 1.0;
        for i in 1..10 {
            c[i] = -eq.pi0[i - 1];
        }
        let direct = (c.transpose() * &vecm.a * vecm.b.transpose()).transpose();
        for i in 0..10 {
            assert!((direct[i] - eq.delta[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_sigma22_is_rejected() {
        let mut vecm = table2_we(3, -0.5);
        vecm.sigma_eps = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        assert!(implied_single_equation(&vecm, 1).is_err());
    }

    #[test]
    fn q_transform_without_basis_is_permutation() {
        let panel = random_panel(50, 3, 21);
        let d = build_cecm_design(&panel, 1, DeterministicSpec::Constant).unwrap();
        let s_delta = [0, 2];
        let s_pi = [1, 4];
        let out = q_transform(&d, &s_delta, &s_pi, &DMatrix::zeros(2, 0)).unwrap();
        assert_eq!(out.ncols(), 4);
        assert_eq!(out.column(0), d.v_proj.column(3 + 1));
        assert_eq!(out.column(1), d.v_proj.column(3 + 4));
        assert_eq!(out.column(2), d.v_proj.column(0));
        assert_eq!(out.column(3), d.v_proj.column(2));
    }

    #[test]
    fn q_transform_full_rank_basis_has_no_integrated_block() {
        let panel = random_panel(50, 3, 22);
        let d = build_cecm_design(&panel, 1, DeterministicSpec::Constant).unwrap();
        let basis = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let out = q_transform(&d, &[0, 1], &[0], &basis).unwrap();
        assert_eq!(out.ncols(), 3);
        assert_eq!(out.column(2), d.v_proj.column(3));
    }

    #[test]
    fn q_transform_rejects_deficient_basis() {
        let panel = random_panel(50, 3, 23);
        let d = build_cecm_design(&panel, 1, DeterministicSpec::Constant).unwrap();
        let basis = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        assert!(q_transform(&d, &[0, 1], &[0], &basis).is_err());
    }

    #[test]
    fn scaled_covariance_only_stationary_block() {
        let panel = random_panel(50, 3, 24);
        let d = build_cecm_design(&panel, 1, DeterministicSpec::Constant).unwrap();
        let out = q_transform(&d, &[], &[0, 1, 2], &DMatrix::zeros(0, 0)).unwrap();
        let sc = scaled_covariance(&out, 0, 3, d.n_obs()).unwrap();
        let direct = out.transpose() * &out / d.n_obs() as f64;
        assert!((sc.sigma11() - direct).amax() < 1e-12);
        assert_eq!(sc.sigma22().shape(), (0, 0));
    }

    #[test]
    fn scaled_covariance_dimension_mismatch() {
        let m = DMatrix::zeros(10, 3);
        assert!(scaled_covariance(&m, 1, 1, 10).is_err());
    }

    #[test]
    fn csv_with_date_column_and_target_by_name() {
        let csv = "date,u,g1,g2\n2004-01,1.0,2.0,3.0\n2004-02,1.5,2.5,3.5\n2004-03,1.2,2.2,3.1\n";
        let panel = read_panel_csv(csv.as_bytes(), &TargetSelector::Name("g1".into())).unwrap();
        assert_eq!(panel.n_series(), 3);
        assert_eq!(panel.target_index(), 1);
        assert_eq!(panel.row_labels().unwrap()[1], "2004-02");
        assert_eq!(panel.z(0, 0), 2.0);
    }

    #[test]
    fn csv_malformed_cell_names_row_and_column() {
        let csv = "a,b\n1.0,2.0\n1.0,oops\n";
        let err = read_panel_csv(csv.as_bytes(), &TargetSelector::Index(0)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3"), "{msg}");
        assert!(msg.contains("column 2"), "{msg}");
    }

    #[test]
    fn insufficient_rows_error() {
        let panel = random_panel(4, 2, 1);
        assert!(matches!(
            build_cecm_design(&panel, 2, DeterministicSpec::ConstantAndTrend),
            Err(SpecsError::InsufficientRows { .. })
        ));
    }

    #[test]
    fn non_finite_panel_rejected() {
        let mut m = DMatrix::zeros(5, 2);
        m[(2, 1)] = f64::NAN;
        assert!(matches!(
            TimeSeriesPanel::from_matrix(m),
            Err(SpecsError::NonFinite { row: 2, col: 1 })
        ));
    }
}
