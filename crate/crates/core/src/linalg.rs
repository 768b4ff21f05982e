//! Small dense complex linear-algebra helpers shared by the channel model,
//! the optimizers and the simulator.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// `(M + M^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c64(0.5, 0.0)
}

/// Largest entrywise deviation from Hermitian symmetry, relative to `1 + max|m_ij|`.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let scale = 1.0 + m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut worst = 0.0_f64;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst / scale
}

/// Eigenvalues (ascending) of a Hermitian matrix.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn min_eigenvalue_real(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Principal eigenpair `(λ_max, unit eigenvector)` and the second-largest eigenvalue.
pub fn principal_eigenpair(m: &CMatrix) -> (f64, CVector, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = order[0];
    let second = order.get(1).map(|&i| eig.eigenvalues[i]).unwrap_or(0.0);
    (eig.eigenvalues[top], eig.eigenvectors.column(top).into_owned(), second)
}

/// Real part of `x^H A x`.
pub fn quad_form(x: &CVector, a: &CMatrix) -> f64 {
    x.dotc(&(a * x)).re
}

/// `|row · x|^2` where `row` is a 1×K row vector stored as a `K`-vector.
pub fn gain(row: &CVector, x: &CVector) -> f64 {
    row.iter().zip(x.iter()).map(|(h, v)| h * v).sum::<C64>().norm_sqr()
}

pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// 2-norm condition number from singular values.
pub fn condition_number(m: &CMatrix) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `[[Re M, -Im M], [Im M, Re M]]`, no symmetry checks.
pub fn realify(m: &CMatrix) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let mut out = DMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i + r, j + c)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
        }
    }
    out
}

/// Inverse of [`realify`] for a square realified matrix.
pub fn derealify(m: &DMatrix<f64>) -> CMatrix {
    let n = m.nrows() / 2;
    CMatrix::from_fn(n, n, |i, j| {
        // average the two copies so slightly unstructured input is projected
        let re = 0.5 * (m[(i, j)] + m[(i + n, j + n)]);
        let im = 0.5 * (m[(i + n, j)] - m[(i, j + n)]);
        c64(re, im)
    })
}
