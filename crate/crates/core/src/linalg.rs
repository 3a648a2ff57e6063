//! Small dense linear-algebra helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Result, SpecsError};

/// Relative pivot threshold below which an R diagonal counts as zero.
const RANK_TOL: f64 = 1e-10;

/// Least squares by Householder QR. Fails on rank deficiency.
pub fn ols_qr(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(SpecsError::DimensionMismatch(format!(
            "design has {n} rows, response has {}",
            y.len()
        )));
    }
    if k == 0 {
        return Ok(DVector::zeros(0));
    }
    if k > n {
        return Err(SpecsError::Singular(format!("{k} columns exceed {n} rows")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = r.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max_diag == 0.0 || r.diagonal().iter().any(|v| v.abs() <= RANK_TOL * max_diag) {
        return Err(SpecsError::Singular("design columns are collinear".into()));
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| SpecsError::Singular("triangular solve failed".into()))
}

/// Least squares with classical standard errors `sqrt(σ̂² diag((X'X)^{-1}))`,
/// `σ̂² = RSS / (n − k)`. Returns `(beta, se, rss)`.
pub fn ols_with_se(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, f64)> {
    let (n, k) = x.shape();
    if n <= k {
        return Err(SpecsError::Singular(format!("{k} columns need more than {n} rows")));
    }
    let beta = ols_qr(x, y)?;
    let rss = (y - x * &beta).norm_squared();
    let sigma2 = rss / (n - k) as f64;
    let r = x.clone().qr().r();
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| SpecsError::Singular("triangular inverse failed".into()))?;
    let se = DVector::from_fn(k, |i, _| (sigma2 * rinv.row(i).norm_squared()).sqrt());
    Ok((beta, se, rss))
}

/// Solve `a x = b` for symmetric positive-definite `a` via Cholesky.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| SpecsError::Singular("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn power_iteration(a: &DMatrix<f64>, max_iter: usize, tol: f64) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    // deterministic, non-degenerate start
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0).sqrt().fract());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = a * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - lambda).abs() <= tol * next.abs().max(f64::MIN_POSITIVE) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

/// Orthonormal basis of the orthogonal complement of the column space of `b`.
pub fn orthonormal_complement(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, r) = b.shape();
    if r == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    let btb = b.transpose() * b;
    let eig = SymmetricEigen::new(btb.clone());
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &l| (lo.min(l), hi.max(l)));
    if hi == 0.0 || lo <= RANK_TOL * hi {
        return Err(SpecsError::Singular("basis is not of full column rank".into()));
    }
    let chol = btb
        .cholesky()
        .ok_or_else(|| SpecsError::Singular("basis is not of full column rank".into()))?;
    let proj = DMatrix::identity(n, n) - b * chol.inverse() * b.transpose();
    let eig = SymmetricEigen::new(proj);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let keep = &order[..n - r];
    if keep.iter().any(|&i| eig.eigenvalues[i] < 0.5) {
        return Err(SpecsError::Singular("basis is not of full column rank".into()));
    }
    Ok(eig.eigenvectors.select_columns(keep))
}

/// `a^{-1/2}` for symmetric positive-definite `a`.
pub fn inv_sqrt_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(SpecsError::Singular("matrix is not positive definite".into()));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Modulus of the largest eigenvalue of a general square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    match Schur::try_new(a.clone(), f64::EPSILON, 100 * n) {
        Some(schur) => schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
        None => radius_by_squaring(a),
    }
}

/// `‖A^k‖^{1/k}` with `k = 2^40`, by normalized repeated squaring. Used when the
/// QR iteration stalls on highly structured matrices.
fn radius_by_squaring(a: &DMatrix<f64>) -> f64 {
    let mut m = a.clone();
    let mut log_scale = 0.0;
    let squarings = 40;
    for i in 0..squarings {
        let norm = m.amax();
        if norm == 0.0 {
            return 0.0;
        }
        m /= norm;
        log_scale += norm.ln() / 2f64.powi(i);
        m = &m * &m;
    }
    let norm = m.amax();
    if norm == 0.0 {
        return 0.0;
    }
    (log_scale + norm.ln() / 2f64.powi(squarings)).exp()
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Symmetric sub-matrix `a[idx, idx]`.
pub fn select_square(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}
