//! Dense complex helpers on top of `nalgebra`.
//!
//! Hot loops (Wirtinger Flow iterations, dictionary evaluation) go through the
//! slice-based products here, which walk the column-major storage directly.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Gram matrices with a larger condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// `Σ conj(a_i) b_i`
#[inline]
pub fn dot_h(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

#[inline]
pub fn norm(v: &[Complex64]) -> f64 {
    norm_sqr(v).sqrt()
}

/// `A x` into `out` (`out.len() == A.nrows()`).
pub fn mat_vec_into(a: &CMatrix, x: &[Complex64], out: &mut [Complex64]) {
    let rows = a.nrows();
    debug_assert_eq!(a.ncols(), x.len());
    debug_assert_eq!(out.len(), rows);
    out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
    for (col, &xj) in a.as_slice().chunks_exact(rows).zip(x) {
        for (o, &aij) in out.iter_mut().zip(col) {
            *o += aij * xj;
        }
    }
}

pub fn mat_vec(a: &CMatrix, x: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.nrows()];
    mat_vec_into(a, x, &mut out);
    out
}

/// `Aᴴ y` into `out` (`out.len() == A.ncols()`).
pub fn mat_h_vec_into(a: &CMatrix, y: &[Complex64], out: &mut [Complex64]) {
    let rows = a.nrows();
    debug_assert_eq!(rows, y.len());
    debug_assert_eq!(out.len(), a.ncols());
    for (o, col) in out.iter_mut().zip(a.as_slice().chunks_exact(rows)) {
        *o = dot_h(col, y);
    }
}

pub fn mat_h_vec(a: &CMatrix, y: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.ncols()];
    mat_h_vec_into(a, y, &mut out);
    out
}

/// Spectral condition number of a Hermitian positive semidefinite matrix.
pub fn hermitian_condition(g: &CMatrix) -> f64 {
    let eig = g.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(0.0_f64, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Cholesky factor of a Hermitian positive definite matrix, rejecting
/// matrices whose condition number exceeds [`MAX_CONDITION`].
pub fn checked_cholesky(g: &CMatrix) -> Result<Cholesky<Complex64, nalgebra::Dyn>> {
    let condition = hermitian_condition(g);
    if condition > MAX_CONDITION {
        return Err(Error::DegenerateMatrix { condition });
    }
    Cholesky::new(g.clone()).ok_or(Error::DegenerateMatrix { condition })
}

pub fn to_dvector(v: &[Complex64]) -> DVector<Complex64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn products_match_nalgebra() {
        let a = CMatrix::from_fn(3, 2, |i, j| c(i as f64 + 1.0, j as f64 - 0.5));
        let x = [c(1.0, 2.0), c(-0.5, 0.25)];
        let y = [c(0.3, -1.0), c(2.0, 0.0), c(0.0, 1.0)];
        let ax = &a * to_dvector(&x);
        let ahy = a.adjoint() * to_dvector(&y);
        for (p, q) in mat_vec(&a, &x).iter().zip(ax.iter()) {
            assert!((p - q).norm() < 1e-14);
        }
        for (p, q) in mat_h_vec(&a, &y).iter().zip(ahy.iter()) {
            assert!((p - q).norm() < 1e-14);
        }
    }

    #[test]
    fn singular_gram_rejected() {
        let v = CMatrix::from_fn(2, 3, |_, j| c(j as f64, 1.0));
        let g = &v * v.adjoint();
        assert!(matches!(checked_cholesky(&g), Err(Error::DegenerateMatrix { .. })));
        let id = CMatrix::identity(3, 3);
        assert!((hermitian_condition(&id) - 1.0).abs() < 1e-12);
    }
}
