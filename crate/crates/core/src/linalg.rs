//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Inverse of a symmetric positive-definite matrix, reporting the spectrum on
/// failure.
pub fn spd_inverse(a: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let sym = symmetrize(a);
    match sym.clone().cholesky() {
        Some(ch) => Ok(symmetrize(&ch.inverse())),
        None => Err(Error::Singular {
            context: context.to_string(),
            eigenvalues: eigenvalues(&sym),
        }),
    }
}

/// Inverse of a general symmetric matrix via eigendecomposition; fails when
/// the condition number exceeds `1e14`.
pub fn sym_inverse(a: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let sym = symmetrize(a);
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max == 0.0 || eig.eigenvalues.iter().any(|v| v.abs() <= max * 1e-14) {
        return Err(Error::Singular {
            context: context.to_string(),
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
        });
    }
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v));
    let out = &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    Ok(symmetrize(&out))
}

pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest absolute asymmetry relative to the largest entry.
pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).amax() / scale
}

/// Columns of `x` that are linearly dependent on earlier columns, found by
/// Gram-Schmidt with a relative tolerance. Earlier columns are kept.
pub fn dependent_columns(x: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let n = x.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm0 = col.norm();
        if norm0 == 0.0 {
            dropped.push(j);
            continue;
        }
        let mut v = col;
        // two passes of modified Gram-Schmidt for stability
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm <= rel_tol * norm0 * (n as f64).sqrt().max(1.0) {
            dropped.push(j);
        } else {
            basis.push(v / norm);
        }
    }
    dropped
}

/// Solves `a x = b` for a small square system by LU with partial pivoting.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().lu().solve(b)
}

/// Least squares through a thin QR factorization; `None` if `x` is rank
/// deficient or has fewer rows than columns.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let (n, p) = x.shape();
    if n < p || y.len() != n {
        return None;
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    if !(scale > 0.0) || r.diagonal().iter().any(|d| d.abs() <= 1e-12 * scale) {
        return None;
    }
    let qty = qr.q().tr_mul(y);
    r.solve_upper_triangular(&qty)
}

/// Kahan-Babuska-Neumaier summation.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
