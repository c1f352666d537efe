//! Dense linear-algebra helpers shared by the smoothing and regression code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{FofrError, Result};

/// Relative eigenvalue threshold used for ranks and pseudo-determinants.
pub const EIGEN_REL_TOL: f64 = 1e-10;

/// Largest acceptable condition estimate for a system we are willing to solve.
pub const MAX_CONDITION: f64 = 1e12;

/// Solves `a x = b` for symmetric `a`, trying Cholesky first and falling back
/// to a partially pivoted LU factorization.
pub fn solve_symmetric(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    a.clone()
        .lu()
        .solve(b)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| FofrError::Rank(format!("{}x{} system is singular", a.nrows(), a.ncols())))
}

/// Inverse of a symmetric matrix with the same factorization policy as
/// [`solve_symmetric`].
pub fn inverse_symmetric(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let inv = solve_symmetric(a, &DMatrix::identity(n, n))?;
    Ok(symmetrize(&inv))
}

/// Condition estimate of a symmetric PSD matrix after Jacobi (diagonal)
/// scaling. Returns infinity when the scaled matrix is not positive definite.
pub fn scaled_condition(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 1.0;
    }
    let mut scale = DVector::zeros(n);
    for i in 0..n {
        let d = a[(i, i)];
        if d <= 0.0 || !d.is_finite() {
            return f64::INFINITY;
        }
        scale[i] = 1.0 / d.sqrt();
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * scale[i] * scale[j]);
    let eig = SymmetricEigen::new(symmetrize(&scaled)).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(a)).eigenvalues.iter().cloned().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Number of eigenvalues above `EIGEN_REL_TOL` times the largest one.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    pseudo_log_det(a).1
}

/// Log pseudo-determinant (sum of log eigenvalues above the relative
/// threshold) together with the rank used.
pub fn pseudo_log_det(a: &DMatrix<f64>) -> (f64, usize) {
    let ev = symmetric_eigenvalues(a);
    let max = ev.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return (0.0, 0);
    }
    let cut = EIGEN_REL_TOL * max;
    ev.iter()
        .filter(|&&v| v > cut)
        .fold((0.0, 0), |(s, r), &v| (s + v.ln(), r + 1))
}

/// `ln |det a|` via LU; errors when the matrix is exactly singular.
pub fn log_abs_det(a: &DMatrix<f64>) -> Result<f64> {
    if let Some(chol) = a.clone().cholesky() {
        return Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>());
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let mut acc = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)].abs();
        if d == 0.0 || !d.is_finite() {
            return Err(FofrError::Numeric("matrix is singular".into()));
        }
        acc += d.ln();
    }
    Ok(acc)
}

/// Column-stacking `vec` operator.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    // tr(AB) without forming the product
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn block_diagonal(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, off), (b.nrows(), b.ncols())).copy_from(b);
        off += b.nrows();
    }
    out
}
