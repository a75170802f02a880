//! Kronecker and tensor-power primitives on the graded space
//! `H ⊕ H^{⊗2} ⊕ … ⊕ H^{⊗N}`.
//!
//! Basis convention: `e_i ⊗ e_j` sits at row-major index `i·d_B + j`
//! (zero-based), the ordering produced by the ordinary Kronecker product.
//! Every multi-index flattening in the crate follows it.

use crate::error::{Error, Result};
use crate::linalg::{all_finite, c, kron_vec, tensor_power, CMatrix, CVector, C64};

/// Dense operator `H^{⊗source_level} → H^{⊗target_level}` over a base space of
/// dimension `base_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    matrix: CMatrix,
    base_dim: usize,
    target_level: usize,
    source_level: usize,
}

impl Operator {
    pub fn new(matrix: CMatrix, base_dim: usize, target_level: usize, source_level: usize) -> Result<Self> {
        if base_dim == 0 {
            return Err(Error::InvalidArgument("base dimension must be positive".into()));
        }
        if target_level == 0 || source_level == 0 {
            return Err(Error::InvalidArgument("operator levels must be positive".into()));
        }
        let rows = checked_pow(base_dim, target_level)?;
        let cols = checked_pow(base_dim, source_level)?;
        if matrix.nrows() != rows {
            return Err(Error::DimensionMismatch { context: "operator rows", expected: rows, found: matrix.nrows() });
        }
        if matrix.ncols() != cols {
            return Err(Error::DimensionMismatch { context: "operator cols", expected: cols, found: matrix.ncols() });
        }
        if !all_finite(&matrix) {
            return Err(Error::NonFinite("operator"));
        }
        Ok(Self { matrix, base_dim, target_level, source_level })
    }

    /// Square operator on the base space `H`.
    pub fn on_base(matrix: CMatrix) -> Result<Self> {
        let d = matrix.nrows();
        Self::new(matrix, d, 1, 1)
    }

    /// Coefficient `W_j : H^{⊗j} → H`.
    pub fn coefficient(matrix: CMatrix, base_dim: usize, order: usize) -> Result<Self> {
        Self::new(matrix, base_dim, 1, order)
    }

    pub fn zeros(base_dim: usize, target_level: usize, source_level: usize) -> Result<Self> {
        let rows = checked_pow(base_dim, target_level)?;
        let cols = checked_pow(base_dim, source_level)?;
        Self::new(CMatrix::zeros(rows, cols), base_dim, target_level, source_level)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn source_level(&self) -> usize {
        self.source_level
    }

    pub fn target_level(&self) -> usize {
        self.target_level
    }

    pub fn is_square(&self) -> bool {
        self.source_level == self.target_level && self.matrix.is_square()
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|z| *z == C64::new(0.0, 0.0))
    }

    pub fn adjoint(&self) -> Operator {
        Operator {
            matrix: self.matrix.adjoint(),
            base_dim: self.base_dim,
            target_level: self.source_level,
            source_level: self.target_level,
        }
    }

    pub fn scaled(&self, factor: C64) -> Operator {
        Operator { matrix: self.matrix.map(|z| z * factor), ..self.clone() }
    }

    pub fn apply(&self, v: &[C64]) -> Result<CVector> {
        if v.len() != self.matrix.ncols() {
            return Err(Error::DimensionMismatch { context: "operator apply", expected: self.matrix.ncols(), found: v.len() });
        }
        Ok(&self.matrix * CVector::from_column_slice(v))
    }
}

/// Graded vector `(v_1, …, v_N)` with `v_k ∈ ℂ^{d^k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    levels: Vec<CVector>,
    base_dim: usize,
}

impl FockVector {
    pub fn new(base_dim: usize, levels: Vec<CVector>) -> Result<Self> {
        if base_dim == 0 || levels.is_empty() {
            return Err(Error::InvalidArgument("Fock vector needs d ≥ 1 and at least one level".into()));
        }
        for (k, v) in levels.iter().enumerate() {
            let expected = checked_pow(base_dim, k + 1)?;
            if v.len() != expected {
                return Err(Error::DimensionMismatch { context: "Fock level length", expected, found: v.len() });
            }
            if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite("Fock vector"));
            }
        }
        Ok(Self { levels, base_dim })
    }

    pub fn zeros(base_dim: usize, num_levels: usize) -> Result<Self> {
        let levels = (1..=num_levels)
            .map(|k| checked_pow(base_dim, k).map(CVector::zeros))
            .collect::<Result<Vec<_>>>()?;
        Self::new(base_dim, levels)
    }

    pub fn from_flat(base_dim: usize, num_levels: usize, flat: &[C64]) -> Result<Self> {
        let total = fock_dim(base_dim, num_levels)?;
        if flat.len() != total {
            return Err(Error::DimensionMismatch { context: "flat Fock vector", expected: total, found: flat.len() });
        }
        let mut levels = Vec::with_capacity(num_levels);
        let mut offset = 0;
        for k in 1..=num_levels {
            let len = base_dim.pow(k as u32);
            levels.push(CVector::from_column_slice(&flat[offset..offset + len]));
            offset += len;
        }
        Self::new(base_dim, levels)
    }

    pub fn to_flat(&self) -> CVector {
        let total: usize = self.levels.iter().map(|v| v.len()).sum();
        let mut out = CVector::zeros(total);
        let mut offset = 0;
        for v in &self.levels {
            out.rows_mut(offset, v.len()).copy_from(v);
            offset += v.len();
        }
        out
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[CVector] {
        &self.levels
    }

    /// Level `k` (one-based).
    pub fn level(&self, k: usize) -> Result<&CVector> {
        if k == 0 || k > self.levels.len() {
            return Err(Error::LevelOutOfRange { level: k, max: self.levels.len() });
        }
        Ok(&self.levels[k - 1])
    }

    pub fn q_inner(&self, other: &FockVector) -> Result<C64> {
        q_inner(self, other)
    }

    pub fn q_norm(&self) -> f64 {
        self.levels.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
    }
}

/// Per-level weights of the Fock inner product. Only the identity weighting
/// is implemented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LevelWeights {
    #[default]
    Identity,
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// `S_n(A) = Σ_{i<n} 1^{⊗i} ⊗ A ⊗ 1^{⊗(n-1-i)}` for square `A`.
pub fn symm_sum(a: &Operator, n: usize) -> Result<Operator> {
    if !a.is_square() {
        return Err(Error::NotSquare { rows: a.matrix.nrows(), cols: a.matrix.ncols() });
    }
    symm_sum_rect(a, n)
}

/// `S_n(W)` for `W : H^{⊗j} → H^{⊗i}`; the result maps
/// `H^{⊗(n+j-1)} → H^{⊗(n+i-1)}`.
pub fn symm_sum_rect(a: &Operator, n: usize) -> Result<Operator> {
    if n == 0 {
        return Err(Error::InvalidArgument("symmetrized sum needs n ≥ 1".into()));
    }
    let d = a.base_dim;
    let target = a.target_level + n - 1;
    let source = a.source_level + n - 1;
    let mut out = CMatrix::zeros(checked_pow(d, target)?, checked_pow(d, source)?);
    for_each_symm_entry(a, n, |r, col, v| out[(r, col)] += v);
    Operator::new(out, d, target, source)
}

/// Nonzero entries of `S_n(W)` as `(row, col, value)` triplets (duplicates
/// possible; they add).
pub fn symm_sum_triplets(a: &Operator, n: usize) -> Result<Vec<(usize, usize, C64)>> {
    if n == 0 {
        return Err(Error::InvalidArgument("symmetrized sum needs n ≥ 1".into()));
    }
    checked_pow(a.base_dim, a.source_level + n - 1)?;
    checked_pow(a.base_dim, a.target_level + n - 1)?;
    let mut out = Vec::new();
    for_each_symm_entry(a, n, |r, col, v| out.push((r, col, v)));
    Ok(out)
}

fn for_each_symm_entry(a: &Operator, n: usize, mut sink: impl FnMut(usize, usize, C64)) {
    let d = a.base_dim;
    let a_rows = a.matrix.nrows();
    let a_cols = a.matrix.ncols();
    let nonzeros: Vec<(usize, usize, C64)> = (0..a_cols)
        .flat_map(|col| (0..a_rows).map(move |row| (row, col)))
        .filter_map(|(row, col)| {
            let v = a.matrix[(row, col)];
            (v != c(0.0)).then_some((row, col, v))
        })
        .collect();
    for slot in 0..n {
        let left = d.pow(slot as u32);
        let right = d.pow((n - 1 - slot) as u32);
        for l in 0..left {
            for &(ar, ac, v) in &nonzeros {
                let row_base = (l * a_rows + ar) * right;
                let col_base = (l * a_cols + ac) * right;
                for r in 0..right {
                    sink(row_base + r, col_base + r, v);
                }
            }
        }
    }
}

/// Matrix-free action `S_n(W) · v`: applies `W` along each of the `n` tensor
/// slots without materializing the `d^{n+i-1} × d^{n+j-1}` matrix.
pub fn apply_symm_sum(a: &Operator, n: usize, v: &[C64]) -> Result<CVector> {
    if n == 0 {
        return Err(Error::InvalidArgument("symmetrized sum needs n ≥ 1".into()));
    }
    let d = a.base_dim;
    let a_rows = a.matrix.nrows();
    let a_cols = a.matrix.ncols();
    let in_len = checked_pow(d, a.source_level + n - 1)?;
    let out_len = checked_pow(d, a.target_level + n - 1)?;
    if v.len() != in_len {
        return Err(Error::DimensionMismatch { context: "S_n apply", expected: in_len, found: v.len() });
    }
    let mut out = CVector::zeros(out_len);
    let mut scratch = vec![c(0.0); a_cols];
    for slot in 0..n {
        let left = d.pow(slot as u32);
        let right = d.pow((n - 1 - slot) as u32);
        for l in 0..left {
            for r in 0..right {
                for (ac, s) in scratch.iter_mut().enumerate() {
                    *s = v[(l * a_cols + ac) * right + r];
                }
                for ar in 0..a_rows {
                    let mut acc = c(0.0);
                    for (ac, s) in scratch.iter().enumerate() {
                        acc += a.matrix[(ar, ac)] * s;
                    }
                    out[(l * a_rows + ar) * right + r] += acc;
                }
            }
        }
    }
    Ok(out)
}

/// `E_N(φ) = (φ, φ^{⊗2}, …, φ^{⊗N})`.
pub fn embed(phi: &[C64], num_levels: usize) -> Result<FockVector> {
    if num_levels == 0 {
        return Err(Error::InvalidArgument("embedding needs N ≥ 1".into()));
    }
    let d = phi.len();
    fock_dim(d, num_levels)?;
    let mut levels = Vec::with_capacity(num_levels);
    let mut current = phi.to_vec();
    for k in 1..=num_levels {
        if k > 1 {
            current = kron_vec(&current, phi);
        }
        levels.push(CVector::from_column_slice(&current));
    }
    FockVector::new(d, levels)
}

/// Level-`k` component of a graded vector.
pub fn project_level(v: &FockVector, k: usize) -> Result<CVector> {
    v.level(k).cloned()
}

/// `⟨u, v⟩_Q = Σ_k ⟨u_k, v_k⟩`, conjugate-linear in `u`. The shorter vector is
/// padded with zero levels.
pub fn q_inner(u: &FockVector, v: &FockVector) -> Result<C64> {
    q_inner_weighted(u, v, LevelWeights::Identity)
}

pub fn q_inner_weighted(u: &FockVector, v: &FockVector, weights: LevelWeights) -> Result<C64> {
    if u.base_dim != v.base_dim {
        return Err(Error::BaseDimMismatch { left: u.base_dim, right: v.base_dim });
    }
    match weights {
        LevelWeights::Identity => Ok(u.levels.iter().zip(&v.levels).map(|(a, b)| a.dotc(b)).sum()),
    }
}

/// `K(N) = Σ_{k=1}^N d^k`.
pub fn fock_dim(base_dim: usize, num_levels: usize) -> Result<usize> {
    let mut total: usize = 0;
    for k in 1..=num_levels {
        total = total
            .checked_add(checked_pow(base_dim, k)?)
            .ok_or(Error::DimensionOverflow { base_dim, level: num_levels })?;
    }
    Ok(total)
}

/// Starting offset of each level in the flattened graded vector, plus the total
/// at the end (`N + 1` entries).
pub fn level_offsets(base_dim: usize, num_levels: usize) -> Result<Vec<usize>> {
    let mut offsets = Vec::with_capacity(num_levels + 1);
    let mut acc = 0usize;
    offsets.push(0);
    for k in 1..=num_levels {
        acc = acc
            .checked_add(checked_pow(base_dim, k)?)
            .ok_or(Error::DimensionOverflow { base_dim, level: num_levels })?;
        offsets.push(acc);
    }
    Ok(offsets)
}

pub(crate) fn checked_pow(base: usize, exp: usize) -> Result<usize> {
    u32::try_from(exp)
        .ok()
        .and_then(|e| base.checked_pow(e))
        .ok_or(Error::DimensionOverflow { base_dim: base, level: exp })
}

/// `Σ_i u^{⊗(i-1)} ⊗ w ⊗ u^{⊗(n-i)}`: the product-rule derivative of `u^{⊗n}`
/// along the direction `w`.
pub fn product_rule(u: &[C64], w: &[C64], n: usize) -> Vec<C64> {
    let len = u.len().pow(n as u32);
    let mut out = vec![c(0.0); len];
    for i in 0..n {
        let left = tensor_power(u, i);
        let right = tensor_power(u, n - 1 - i);
        let term = kron_vec(&kron_vec(&left, w), &right);
        for (o, t) in out.iter_mut().zip(term) {
            *o += t;
        }
    }
    out
}
