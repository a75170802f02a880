//! Dense complex linear-algebra helpers shared by the certificate and
//! semigroup code. Thin wrappers around `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

#[inline]
pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `(M + M†) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues of a Hermitian matrix, ascending. Only the lower triangle's
/// Hermitian completion matters; callers pass exactly Hermitian input.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    assert!(m.is_square(), "hermitian_eigenvalues requires a square matrix");
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut vals: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    vals
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn hermitian_max_eigenvalue(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m)
        .last()
        .copied()
        .unwrap_or(f64::NEG_INFINITY)
}

/// Eigen-decomposition of a Hermitian matrix (values ascending, vectors as columns).
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), order.len(), |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

/// Operator 2-norm (largest singular value).
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Max absolute row sum.
pub fn inf_norm(m: &CMatrix) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Max absolute column sum.
pub fn one_norm(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest entry magnitude.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    m.is_square() && max_abs(&(m - m.adjoint())) <= tol * max_abs(m).max(1.0)
}

pub fn all_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Kronecker product of two vectors, row-major (`a ⊗ b`).
pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|&y| x * y));
    }
    out
}

/// `v^{⊗n}` as a flat vector of length `len(v)^n`.
pub fn tensor_power(v: &[C64], n: usize) -> Vec<C64> {
    let mut out = vec![c(1.0)];
    for _ in 0..n {
        out = kron_vec(&out, v);
    }
    out
}

/// Standard complex Gaussian vector (independent N(0,1/2) real and imaginary parts
/// scaled so that E|z|² = 1).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVector::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

/// Uniformly distributed unit vector on the complex sphere.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVector {
    loop {
        let v = complex_gaussian(rng, n);
        let norm = v.norm();
        if norm > 1e-300 {
            return v.unscale(norm);
        }
    }
}

pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    let v = complex_gaussian(rng, rows * cols);
    CMatrix::from_iterator(rows, cols, v.iter().copied())
}

/// Haar-distributed unitary via QR of a Gaussian matrix with phase correction.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, d: usize) -> CMatrix {
    let g = complex_gaussian_matrix(rng, d, d);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let diag = r[(j, j)];
        let phase = if diag.norm() > 0.0 { diag / diag.norm() } else { c(1.0) };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    q
}

/// Random Hermitian negative semidefinite matrix with spectrum in `[-spread, 0]`
/// and at least one eigenvalue pinned at `top` (≤ 0).
pub fn random_hermitian_nsd<R: Rng + ?Sized>(rng: &mut R, d: usize, spread: f64, top: f64) -> CMatrix {
    let u = haar_unitary(rng, d);
    let mut eigs: Vec<f64> = (0..d).map(|_| top - spread * rng.random::<f64>()).collect();
    if let Some(first) = eigs.first_mut() {
        *first = top;
    }
    let diag = CMatrix::from_diagonal(&CVector::from_iterator(d, eigs.into_iter().map(c)));
    let m = &u * diag * u.adjoint();
    hermitian_part(&m)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}
