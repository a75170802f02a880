//! Truncated Carleman matrices for polynomial systems
//! `x' = W_1 x + W_2 x^{⊗2} + … + W_p x^{⊗p}`.

use std::collections::BTreeMap;

use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_max_eigenvalue, hermitian_part, inf_norm, spectral_norm, tensor_power, CMatrix, CVector, C64};
use crate::tensor::{checked_pow, embed, level_offsets, symm_sum_triplets, FockVector, Operator};

/// Polynomial ODE with coefficients `W_j : H^{⊗j} → H` and an initial value.
#[derive(Clone, Debug, PartialEq)]
pub struct NonlinearSystem {
    base_dim: usize,
    coefficients: Vec<Operator>,
    phi0: CVector,
}

impl NonlinearSystem {
    /// `coefficients[j-1]` is `W_j`, a `d × d^j` matrix.
    pub fn new(coefficients: Vec<CMatrix>, phi0: CVector) -> Result<Self> {
        let first = coefficients
            .first()
            .ok_or_else(|| Error::InvalidArgument("system needs at least W_1".into()))?;
        let d = first.nrows();
        if d == 0 {
            return Err(Error::InvalidArgument("base dimension must be positive".into()));
        }
        if phi0.len() != d {
            return Err(Error::DimensionMismatch { context: "initial condition", expected: d, found: phi0.len() });
        }
        if phi0.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("initial condition"));
        }
        let coefficients = coefficients
            .into_iter()
            .enumerate()
            .map(|(k, m)| {
                if m.nrows() != d {
                    return Err(Error::DimensionMismatch { context: "W_j rows", expected: d, found: m.nrows() });
                }
                let cols = checked_pow(d, k + 1)?;
                if m.ncols() != cols {
                    return Err(Error::DimensionMismatch { context: "W_j cols", expected: cols, found: m.ncols() });
                }
                Operator::coefficient(m, d, k + 1)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { base_dim: d, coefficients, phi0 })
    }

    pub fn quadratic(w1: CMatrix, w2: CMatrix, phi0: CVector) -> Result<Self> {
        Self::new(vec![w1, w2], phi0)
    }

    /// Scalar system `x' = Σ w_j x^j`.
    pub fn scalar(coefficients: &[f64], phi0: f64) -> Result<Self> {
        let ws = coefficients.iter().map(|&w| CMatrix::from_element(1, 1, c(w))).collect();
        Self::new(ws, CVector::from_element(1, c(phi0)))
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    /// Polynomial degree `p`.
    pub fn degree(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[Operator] {
        &self.coefficients
    }

    /// `W_j` (one-based); `None` beyond the degree.
    pub fn w(&self, j: usize) -> Option<&Operator> {
        j.checked_sub(1).and_then(|k| self.coefficients.get(k))
    }

    pub fn w1(&self) -> &CMatrix {
        self.coefficients[0].matrix()
    }

    /// `W_2`, or the zero map for linear systems.
    pub fn w2(&self) -> CMatrix {
        match self.w(2) {
            Some(op) => op.matrix().clone(),
            None => CMatrix::zeros(self.base_dim, self.base_dim * self.base_dim),
        }
    }

    pub fn phi0(&self) -> &CVector {
        &self.phi0
    }

    pub fn with_phi0(&self, phi0: CVector) -> Result<Self> {
        Self::new(self.coefficients.iter().map(|op| op.matrix().clone()).collect(), phi0)
    }

    /// Right-hand side `Σ_j W_j x^{⊗j}`.
    pub fn rhs(&self, x: &[C64]) -> CVector {
        let mut out = CVector::zeros(self.base_dim);
        let mut power = vec![c(1.0)];
        for op in &self.coefficients {
            power = crate::linalg::kron_vec(&power, x);
            if op.is_zero() {
                continue;
            }
            out += op.matrix() * CVector::from_column_slice(&power);
        }
        out
    }

    /// Symmetrize every `W_j` over permutations of its tensor factors.
    pub fn symmetrized(&self) -> Result<Self> {
        let ws = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(k, op)| symmetrize(op.matrix(), self.base_dim, k + 1))
            .collect();
        Self::new(ws, self.phi0.clone())
    }
}

/// Average of `W` over all permutations of the `order` tensor factors of its
/// column space.
pub fn symmetrize(w: &CMatrix, base_dim: usize, order: usize) -> CMatrix {
    if order <= 1 {
        return w.clone();
    }
    let perms = permutations(order);
    let scale = 1.0 / perms.len() as f64;
    let cols = w.ncols();
    let mut out = CMatrix::zeros(w.nrows(), cols);
    let mut digits = vec![0usize; order];
    for col in 0..cols {
        let mut rest = col;
        for slot in (0..order).rev() {
            digits[slot] = rest % base_dim;
            rest /= base_dim;
        }
        for perm in &perms {
            let permuted = perm.iter().fold(0, |acc, &slot| acc * base_dim + digits[slot]);
            for r in 0..w.nrows() {
                out[(r, col)] += w[(r, permuted)] * scale;
            }
        }
    }
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Block `S_i(W_j)` placed at block row `i`, block column `i + j - 1`.
#[derive(Clone, Debug)]
pub struct CarlemanBlock {
    pub target_level: usize,
    pub source_level: usize,
    pub order: usize,
    pub matrix: CsrMatrix<C64>,
}

/// Truncated Carleman system `C_N` together with its block structure.
#[derive(Clone, Debug)]
pub struct CarlemanSystem {
    level: usize,
    system: NonlinearSystem,
    blocks: BTreeMap<(usize, usize), CarlemanBlock>,
    matrix: CsrMatrix<C64>,
    offsets: Vec<usize>,
}

/// Assemble `C_N`: diagonal blocks `S_i(W_1)` and couplings `S_i(W_j)` at
/// column level `i + j - 1`, dropped beyond level `N`.
pub fn assemble(sys: &NonlinearSystem, level: usize) -> Result<CarlemanSystem> {
    if level == 0 {
        return Err(Error::InvalidArgument("Carleman level must be at least 1".into()));
    }
    let d = sys.base_dim;
    let offsets = level_offsets(d, level)?;
    let slots: Vec<(usize, usize)> = (1..=level)
        .flat_map(|i| (1..=sys.degree()).map(move |j| (i, j)))
        .filter(|&(i, j)| i + j - 1 <= level)
        .filter(|&(_, j)| !sys.coefficients[j - 1].is_zero() || j == 1)
        .collect();

    let built: Vec<((usize, usize), CarlemanBlock)> = slots
        .par_iter()
        .map(|&(i, j)| {
            let op = &sys.coefficients[j - 1];
            let rows = checked_pow(d, i)?;
            let cols = checked_pow(d, i + j - 1)?;
            let mut coo = CooMatrix::new(rows, cols);
            for (r, col, v) in symm_sum_triplets(op, i)? {
                coo.push(r, col, v);
            }
            let block = CarlemanBlock { target_level: i, source_level: i + j - 1, order: j, matrix: CsrMatrix::from(&coo) };
            Ok(((i, i + j - 1), block))
        })
        .collect::<Result<_>>()?;

    let total = offsets[level];
    let mut coo = CooMatrix::new(total, total);
    for ((i, m), block) in &built {
        let (r0, c0) = (offsets[i - 1], offsets[m - 1]);
        for (r, col, v) in block.matrix.triplet_iter() {
            coo.push(r0 + r, c0 + col, *v);
        }
    }
    Ok(CarlemanSystem {
        level,
        system: sys.clone(),
        blocks: built.into_iter().collect(),
        matrix: CsrMatrix::from(&coo),
        offsets,
    })
}

impl CarlemanSystem {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn base_dim(&self) -> usize {
        self.system.base_dim
    }

    /// `K(N)`.
    pub fn dim(&self) -> usize {
        self.offsets[self.level]
    }

    pub fn system(&self) -> &NonlinearSystem {
        &self.system
    }

    pub fn blocks(&self) -> &BTreeMap<(usize, usize), CarlemanBlock> {
        &self.blocks
    }

    pub fn block(&self, row_level: usize, col_level: usize) -> Option<&CarlemanBlock> {
        self.blocks.get(&(row_level, col_level))
    }

    pub fn matrix(&self) -> &CsrMatrix<C64> {
        &self.matrix
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn dense(&self) -> CMatrix {
        CMatrix::from(&self.matrix)
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        csr_apply(&self.matrix, v)
    }

    pub fn diagonal(&self) -> CVector {
        let mut diag = CVector::zeros(self.dim());
        for (r, col, v) in self.matrix.triplet_iter() {
            if r == col {
                diag[r] += *v;
            }
        }
        diag
    }

    /// `E_N(φ_0)` for this system's initial value.
    pub fn initial_state(&self) -> Result<FockVector> {
        embed(self.system.phi0.as_slice(), self.level)
    }
}

/// `y = A x` for a CSR matrix, rows in parallel.
pub fn csr_apply(a: &CsrMatrix<C64>, x: &CVector) -> CVector {
    let offsets = a.row_offsets();
    let cols = a.col_indices();
    let vals = a.values();
    let out: Vec<C64> = (0..a.nrows())
        .into_par_iter()
        .with_min_len(256)
        .map(|r| {
            (offsets[r]..offsets[r + 1])
                .map(|k| vals[k] * x[cols[k]])
                .sum()
        })
        .collect();
    CVector::from_vec(out)
}

/// Block-diagonal part `A = Diag(S_i(W_1))` and remainder `B = C_N − A`.
pub fn split_a_b(cs: &CarlemanSystem) -> (CsrMatrix<C64>, CsrMatrix<C64>) {
    let n = cs.dim();
    let mut a = CooMatrix::new(n, n);
    let mut b = CooMatrix::new(n, n);
    for ((i, m), block) in &cs.blocks {
        let (r0, c0) = (cs.offsets[i - 1], cs.offsets[m - 1]);
        let target = if i == m { &mut a } else { &mut b };
        for (r, col, v) in block.matrix.triplet_iter() {
            target.push(r0 + r, c0 + col, *v);
        }
    }
    (CsrMatrix::from(&a), CsrMatrix::from(&b))
}

/// Adapted system: `W_j ↦ M^{j-1} W_j`, `φ_0 ↦ φ_0 / M`.
pub fn rescale(sys: &NonlinearSystem, scale: f64) -> Result<NonlinearSystem> {
    let norm = sys.phi0.norm();
    if !scale.is_finite() || scale <= 0.0 || scale <= norm {
        return Err(Error::ScaleTooSmall { scale, norm });
    }
    let ws = sys
        .coefficients
        .iter()
        .enumerate()
        .map(|(k, op)| op.matrix() * c(scale.powi(k as i32)))
        .collect();
    NonlinearSystem::new(ws, sys.phi0.unscale(scale))
}

/// Inputs and value of `R = ‖W_2‖ ‖φ_0‖ / |Re λ_1|`.
#[derive(Clone, Debug, PartialEq)]
pub struct RParameter {
    pub value: f64,
    pub w2_norm: f64,
    pub phi0_norm: f64,
    /// Largest real part of `spec(W_1)`, or of the Hermitian part's spectrum
    /// when `hermitian_fallback` is set.
    pub lambda1_re: f64,
    /// `W_1` could not be confirmed diagonalizable.
    pub hermitian_fallback: bool,
}

pub fn parameter_r(sys: &NonlinearSystem) -> Result<RParameter> {
    if sys.degree() != 2 {
        return Err(Error::Unsupported(format!("R is defined for quadratic systems, got degree {}", sys.degree())));
    }
    let w1 = sys.w1();
    let scale = inf_norm(w1).max(1.0);
    let eigs = complex_eigenvalues(w1);
    let diagonalizable = is_normal(w1, scale) || eigenvalues_distinct(&eigs, scale);
    let lambda1_re = if diagonalizable {
        eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    } else {
        hermitian_max_eigenvalue(&hermitian_part(w1))
    };
    if lambda1_re >= -1e-12 * scale {
        return Err(Error::NotStrictlyDissipative { max_real_part: lambda1_re });
    }
    let w2_norm = spectral_norm(&sys.w2());
    let phi0_norm = sys.phi0.norm();
    Ok(RParameter {
        value: w2_norm * phi0_norm / lambda1_re.abs(),
        w2_norm,
        phi0_norm,
        lambda1_re,
        hermitian_fallback: !diagonalizable,
    })
}

/// Eigenvalues of a general complex matrix from its Schur form.
pub fn complex_eigenvalues(m: &CMatrix) -> Vec<C64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let (_, t) = m.clone().schur().unpack();
    (0..t.nrows()).map(|k| t[(k, k)]).collect()
}

fn is_normal(m: &CMatrix, scale: f64) -> bool {
    let comm = m * m.adjoint() - m.adjoint() * m;
    crate::linalg::max_abs(&comm) <= 1e-12 * scale * scale
}

fn eigenvalues_distinct(eigs: &[C64], scale: f64) -> bool {
    eigs.iter()
        .enumerate()
        .all(|(k, a)| eigs[k + 1..].iter().all(|b| (a - b).norm() > 1e-8 * scale))
}

/// `u^{⊗k}` for `k = 1..=N` as a flat graded vector.
pub fn flat_embedding(u: &[C64], level: usize) -> CVector {
    let parts: Vec<C64> = (1..=level).flat_map(|k| tensor_power(u, k)).collect();
    CVector::from_vec(parts)
}
