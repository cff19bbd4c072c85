//! Dense symmetric helpers shared by the learning steps.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalue floor applied before taking matrix roots.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Tolerance used when checking a matrix for symmetry.
pub const SYMMETRY_TOL: f64 = 1e-10;

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `m^power` for a symmetric positive (semi)definite matrix via eigendecomposition.
///
/// Eigenvalues are clamped at [`EIGEN_FLOOR`]. A matrix whose smallest
/// eigenvalue is negative beyond roundoff is rejected.
pub fn symmetric_power(m: &DMatrix<f64>, power: f64) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = max_asymmetry(m);
    let scale = max_abs(m).max(1.0);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let eig = SymmetricEigen::new(m.clone());
    let largest = eig.eigenvalues.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let smallest = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if !smallest.is_finite() || smallest < -1e-8 * largest.max(EIGEN_FLOOR) {
        return Err(Error::NotPositiveDefinite(smallest));
    }
    let n = m.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        let f = ev.max(EIGEN_FLOOR).powf(power);
        scaled.column_mut(k).scale_mut(f);
    }
    let mut out = DMatrix::zeros(n, n);
    out.gemm(1.0, &scaled, &eig.eigenvectors.transpose(), 0.0);
    symmetrize(&mut out);
    Ok(out)
}

/// Solves `s * x = rhs` for symmetric positive definite `s`.
///
/// Starts with a plain Cholesky factorization. On failure a diagonal jitter of
/// `1e-12 * trace / n` is added and grown tenfold, at most three times.
pub fn spd_solve(s: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = s.nrows();
    if let Some(chol) = s.clone().cholesky() {
        return Ok(chol.solve(rhs));
    }
    let base = s.trace().abs() / n.max(1) as f64;
    if base == 0.0 || !base.is_finite() {
        return Err(Error::Singular);
    }
    let mut jitter = 1e-12 * base;
    for _ in 0..3 {
        let mut shifted = s.clone();
        for i in 0..n {
            shifted[(i, i)] += jitter;
        }
        if let Some(chol) = shifted.cholesky() {
            log::debug!("spd_solve succeeded with jitter {jitter:e}");
            return Ok(chol.solve(rhs));
        }
        jitter *= 10.0;
    }
    Err(Error::Singular)
}

pub fn spd_inverse(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = s.nrows();
    let mut inv = spd_solve(s, &DMatrix::identity(n, n))?;
    symmetrize(&mut inv);
    Ok(inv)
}
