//! Small dense helpers shared by the estimators.
//!
//! Complex matrices are `nalgebra::DMatrix<Complex64>`. The space of Hermitian
//! matrices is treated as a real inner-product space with
//! `<A, B> = Re tr(A^H B)`, which is the geometry the lifted solver works in.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub(crate) const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// `(A + A^H) / 2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Largest entrywise deviation of `a` from its conjugate transpose.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Real Frobenius inner product `Re tr(A^H B)`.
pub fn inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// `v^H H v`, real part. For Hermitian `H` the imaginary part vanishes.
pub fn quadratic_form(h: &CMatrix, v: &CVector) -> f64 {
    v.dotc(&(h * v)).re
}

/// Eigen-decomposition of the Hermitian part of `a`, eigenvalues sorted
/// in decreasing order.
pub fn hermitian_eigen(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Eigen("non-finite matrix entry".into()));
    }
    let eig = hermitian_part(a).symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Rotates `v` by a unit-modulus scalar so that entry `reference` is real and
/// nonnegative. If that entry is zero the largest-magnitude entry is used
/// instead; a zero vector is returned unchanged.
pub fn align_phase(v: &CVector, reference: usize) -> CVector {
    let pivot = if v[reference].norm() > 0.0 {
        reference
    } else {
        match v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        {
            Some((i, z)) if z.norm() > 0.0 => i,
            _ => return v.clone(),
        }
    };
    let z = v[pivot];
    let rot = z.conj() / z.norm();
    v * rot
}

/// Real embedding `[[Re A, -Im A], [Im A, Re A]]`, acting on `[Re x; Im x]`.
pub fn real_embedding(a: &CMatrix) -> DMatrix<f64> {
    let (r, c) = a.shape();
    let mut out = DMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = a[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
            out[(i + r, j + c)] = z.re;
        }
    }
    out
}

pub fn stack_real(v: &CVector) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

pub fn unstack_real(x: &DVector<f64>) -> CVector {
    let n = x.len() / 2;
    CVector::from_fn(n, |i, _| Complex64::new(x[i], x[i + n]))
}
