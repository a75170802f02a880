//! Eigenvalue certificates for `C_N + C_N† ⪯ 0` and the sampled nonlinear
//! relative bound.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::carleman::CarlemanSystem;
use crate::error::{Error, Result};
use crate::linalg::{
    c, hermitian_eigen, hermitian_max_eigenvalue, hermitian_part, inf_norm, is_hermitian, max_abs, random_unit_vector,
    spectral_norm, CMatrix, CVector,
};
use crate::tensor::{symm_sum, symm_sum_rect, Operator};

/// Relative eigenvalue tolerance: a certificate passes when
/// `λ_max ≤ DEFAULT_TOL · max(1, ‖M‖_∞)`.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Default number of random `(a, b)` pairs for the sampled bounds.
pub const DEFAULT_SAMPLES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateRecord {
    pub certificate: String,
    pub lambda_max: f64,
    pub tol: f64,
    pub verdict: Verdict,
}

impl CertificateRecord {
    pub fn new(certificate: impl Into<String>, lambda_max: f64, tol: f64) -> Self {
        let verdict = Verdict::from_bool(lambda_max <= tol);
        Self { certificate: certificate.into(), lambda_max, tol, verdict }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DissipativityReport {
    pub level: usize,
    pub tolerance: f64,
    pub lambda_max_ws: f64,
    pub lambda_max_lambda1: f64,
    /// `λ_max(Herm(Z_k))` for `k = 1..N-1`.
    pub per_block_lambda_max: Vec<f64>,
    pub lambda_max_full: f64,
    /// `None` when the hypotheses fail; otherwise whether
    /// `λ_max_full ≤ 2N · tol_full` held.
    pub implication_holds: Option<bool>,
    pub records: Vec<CertificateRecord>,
}

impl DissipativityReport {
    pub fn hypotheses_pass(&self) -> bool {
        self.record("W_S").is_some_and(|r| r.verdict.passed()) && self.record("Lambda1").is_some_and(|r| r.verdict.passed())
    }

    pub fn record(&self, name: &str) -> Option<&CertificateRecord> {
        self.records.iter().find(|r| r.certificate == name)
    }

    /// Every certificate passed and the implication was not contradicted.
    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.verdict.passed()) && self.implication_holds != Some(false)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.records).expect("records serialize")
    }
}

fn scaled_tol(tol: f64, m: &CMatrix) -> f64 {
    tol * inf_norm(m).max(1.0)
}

/// `λ_max(W_S)` with `W_S = (W_1 + W_1†)/2`.
pub fn check_ws(w1: &CMatrix) -> Result<f64> {
    if !w1.is_square() {
        return Err(Error::NotSquare { rows: w1.nrows(), cols: w1.ncols() });
    }
    Ok(hermitian_max_eigenvalue(&hermitian_part(w1)))
}

/// `Λ_1 = [[W_S, W_2], [W_2†, ½ S_2(W_S)]]`.
pub fn lambda1_matrix(w1: &CMatrix, w2: &CMatrix) -> Result<CMatrix> {
    if !w1.is_square() {
        return Err(Error::NotSquare { rows: w1.nrows(), cols: w1.ncols() });
    }
    let d = w1.nrows();
    if w2.nrows() != d {
        return Err(Error::DimensionMismatch { context: "W_2 rows", expected: d, found: w2.nrows() });
    }
    if w2.ncols() != d * d {
        return Err(Error::DimensionMismatch { context: "W_2 cols", expected: d * d, found: w2.ncols() });
    }
    let ws = hermitian_part(w1);
    let s2 = symm_sum(&Operator::on_base(ws.clone())?, 2)?.into_matrix() * c(0.5);
    let mut out = CMatrix::zeros(d + d * d, d + d * d);
    out.view_mut((0, 0), (d, d)).copy_from(&ws);
    out.view_mut((0, d), (d, d * d)).copy_from(w2);
    out.view_mut((d, 0), (d * d, d)).copy_from(&w2.adjoint());
    out.view_mut((d, d), (d * d, d * d)).copy_from(&s2);
    Ok(hermitian_part(&out))
}

pub fn check_lambda1(w1: &CMatrix, w2: &CMatrix) -> Result<f64> {
    Ok(hermitian_max_eigenvalue(&lambda1_matrix(w1, w2)?))
}

/// `Herm(Z_k) = ½ [[S_k(W_S), S_k(W_2)], [S_k(W_2)†, S_{k+1}(W_S)]]`.
pub fn z_block_hermitian(w1: &CMatrix, w2: &CMatrix, k: usize) -> Result<CMatrix> {
    let d = w1.nrows();
    let ws = Operator::on_base(hermitian_part(w1))?;
    let w2 = Operator::coefficient(w2.clone(), d, 2)?;
    let top = symm_sum(&ws, k)?.into_matrix();
    let bottom = symm_sum(&ws, k + 1)?.into_matrix();
    let off = symm_sum_rect(&w2, k)?.into_matrix();
    let (n1, n2) = (top.nrows(), bottom.nrows());
    let mut out = CMatrix::zeros(n1 + n2, n1 + n2);
    out.view_mut((0, 0), (n1, n1)).copy_from(&top);
    out.view_mut((0, n1), (n1, n2)).copy_from(&off);
    out.view_mut((n1, 0), (n2, n1)).copy_from(&off.adjoint());
    out.view_mut((n1, n1), (n2, n2)).copy_from(&bottom);
    Ok(hermitian_part(&(out * c(0.5))))
}

/// `½S_1(W_S) + ½S_N(W_S) + Σ_{k<N} Herm(Z_k)`, each `Z_k` placed on levels
/// `k, k+1`. Equals `(C_N + C_N†)/2` for quadratic systems.
pub fn hermitian_decomposition(cs: &CarlemanSystem) -> Result<CMatrix> {
    let sys = cs.system();
    let n = cs.level();
    let off = cs.offsets();
    let ws = Operator::on_base(hermitian_part(sys.w1()))?;
    let w2 = sys.w2();
    let mut out = CMatrix::zeros(cs.dim(), cs.dim());
    {
        let s1 = ws.matrix() * c(0.5);
        let mut v = out.view_mut((0, 0), s1.shape());
        v += &s1;
    }
    {
        let sn = symm_sum(&ws, n)?.into_matrix() * c(0.5);
        let mut v = out.view_mut((off[n - 1], off[n - 1]), sn.shape());
        v += &sn;
    }
    for k in 1..n {
        let z = z_block_hermitian(sys.w1(), &w2, k)?;
        let mut v = out.view_mut((off[k - 1], off[k - 1]), z.shape());
        v += &z;
    }
    Ok(out)
}

/// Evaluate all certificates for a quadratic (or linear) Carleman system.
pub fn certify(cs: &CarlemanSystem, tol: f64) -> Result<DissipativityReport> {
    let sys = cs.system();
    if sys.degree() > 2 {
        return Err(Error::Unsupported(format!("certificates cover quadratic systems, got degree {}", sys.degree())));
    }
    let w1 = sys.w1();
    let w2 = sys.w2();
    let n = cs.level();

    let ws = hermitian_part(w1);
    let lambda_ws = check_ws(w1)?;
    let lam1 = lambda1_matrix(w1, &w2)?;
    let lambda_l1 = hermitian_max_eigenvalue(&lam1);

    let blocks: Vec<(f64, f64)> = (1..n)
        .into_par_iter()
        .map(|k| {
            let z = z_block_hermitian(w1, &w2, k)?;
            Ok((hermitian_max_eigenvalue(&z), scaled_tol(tol, &z)))
        })
        .collect::<Result<_>>()?;

    let full = hermitian_part(&cs.dense());
    let lambda_full = hermitian_max_eigenvalue(&full);
    let tol_full = scaled_tol(tol, &full);

    let mut records = vec![
        CertificateRecord::new("W_S", lambda_ws, scaled_tol(tol, &ws)),
        CertificateRecord::new("Lambda1", lambda_l1, scaled_tol(tol, &lam1)),
    ];
    for (k, &(lam, t)) in blocks.iter().enumerate() {
        records.push(CertificateRecord::new(format!("Z_{}", k + 1), lam, t));
    }
    records.push(CertificateRecord::new("full", lambda_full, tol_full));

    let premise = records[0].verdict.passed() && records[1].verdict.passed();
    let implication_holds = premise.then_some(lambda_full <= 2.0 * n as f64 * tol_full);

    Ok(DissipativityReport {
        level: n,
        tolerance: tol,
        lambda_max_ws: lambda_ws,
        lambda_max_lambda1: lambda_l1,
        per_block_lambda_max: blocks.iter().map(|b| b.0).collect(),
        lambda_max_full: lambda_full,
        implication_holds,
        records,
    })
}

/// Largest `t` with `Λ_1(W_1, t W_2) ⪯ 0`, for `W_S` negative definite:
/// `t* = 1 / ‖(−W_S)^{-1/2} W_2 (−½S_2(W_S))^{-1/2}‖`.
pub fn lambda1_critical_scale(w1: &CMatrix, w2: &CMatrix) -> Result<f64> {
    let ws = hermitian_part(w1);
    let a = inverse_sqrt_neg(&ws)?;
    let s2 = symm_sum(&Operator::on_base(ws)?, 2)?.into_matrix() * c(0.5);
    let b = inverse_sqrt_neg(&s2)?;
    let norm = spectral_norm(&(a * w2 * b));
    Ok(if norm == 0.0 { f64::INFINITY } else { 1.0 / norm })
}

/// `(−H)^{-1/2}` for Hermitian negative definite `H`.
fn inverse_sqrt_neg(h: &CMatrix) -> Result<CMatrix> {
    let (vals, vecs) = hermitian_eigen(h);
    let top = vals.last().copied().unwrap_or(0.0);
    if top >= 0.0 {
        return Err(Error::NotStrictlyDissipative { max_real_part: top });
    }
    let diag = CVector::from_iterator(vals.len(), vals.iter().map(|&v| c(1.0 / (-v).sqrt())));
    Ok(&vecs * CMatrix::from_diagonal(&diag) * vecs.adjoint())
}

/// Outcome of the sampled nonlinear relative-bound test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelativeBoundMargin {
    /// Largest sampled value of `⟨a,W_1a⟩ − (Re⟨a,W_2b⟩)² / ⟨b,½S_2(W_1)b⟩`.
    pub worst_margin: f64,
    pub samples_evaluated: usize,
    pub kernel_dim: usize,
    /// `max ‖W_2 v‖` over the computed null space of `S_2(W_1)`.
    pub kernel_residual: f64,
}

impl RelativeBoundMargin {
    /// Margin non-positive up to `tol · max(1, ‖W_1‖_∞)`.
    pub fn holds(&self, w1: &CMatrix, tol: f64) -> bool {
        self.worst_margin <= scaled_tol(tol, w1)
    }
}

struct KernelData {
    half_s2: CMatrix,
    /// Set when `W_1` is diagonal; `½S_2(W_1)` is then diagonal too.
    half_s2_diag: Option<Vec<f64>>,
    dim: usize,
    residual: f64,
    nonzero_min: Option<f64>,
}

fn kernel_data(w1: &CMatrix, w2: &CMatrix) -> Result<KernelData> {
    let d = w1.nrows();
    if !is_hermitian(w1, 1e-12) {
        return Err(Error::NotDissipative("W_1 is not Hermitian".into()));
    }
    if w2.nrows() != d || w2.ncols() != d * d {
        return Err(Error::DimensionMismatch { context: "W_2", expected: d * d, found: w2.ncols() });
    }
    let top = hermitian_max_eigenvalue(w1);
    if top > scaled_tol(DEFAULT_TOL, w1) {
        return Err(Error::NotDissipative(format!("λ_max(W_1) = {top:e} > 0")));
    }
    let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || w1[(i, j)] == c(0.0)));
    let mut residual: f64 = 0.0;
    let mut dim = 0;
    let (s2, half_s2_diag) = if diagonal {
        let vals: Vec<f64> = (0..d * d).map(|k| w1[(k / d, k / d)].re + w1[(k % d, k % d)].re).collect();
        let cutoff = 1e-12 * vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (k, v) in vals.iter().enumerate() {
            if v.abs() <= cutoff {
                dim += 1;
                residual = residual.max(w2.column(k).norm());
            }
        }
        let s2 = CMatrix::from_diagonal(&CVector::from_iterator(d * d, vals.iter().map(|&v| c(v))));
        (s2, Some(vals.iter().map(|v| 0.5 * v).collect()))
    } else {
        let s2 = symm_sum(&Operator::on_base(w1.clone())?, 2)?.into_matrix();
        let (vals, vecs) = hermitian_eigen(&s2);
        let cutoff = 1e-12 * vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (k, v) in vals.iter().enumerate() {
            if v.abs() <= cutoff {
                dim += 1;
                residual = residual.max((w2 * vecs.column(k)).norm());
            }
        }
        (s2, None)
    };
    let w1_vals = hermitian_eigen(w1).0;
    let w1_cut = 1e-12 * w1_vals.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let nonzero_min = w1_vals.iter().filter(|v| v.abs() > w1_cut).map(|v| v.abs()).reduce(f64::min);
    Ok(KernelData { half_s2: s2 * c(0.5), half_s2_diag, dim, residual, nonzero_min })
}

fn kernel_tol(w2: &CMatrix) -> f64 {
    DEFAULT_TOL * max_abs(w2).max(1.0)
}

/// Sampled test of the nonlinear relative bound. Kernel inclusion
/// `ker S_2(W_1) ⊂ ker W_2` is checked first and reported as an error when
/// violated.
pub fn nonlinear_relative_bound(w1: &CMatrix, w2: &CMatrix, samples: usize, seed: u64) -> Result<RelativeBoundMargin> {
    let kd = kernel_data(w1, w2)?;
    if kd.residual > kernel_tol(w2) {
        return Err(Error::KernelInclusion { residual: kd.residual });
    }
    let d = w1.nrows();
    let dd = d * d;
    let denom_floor = 1e-12 * max_abs(&kd.half_s2).max(1e-300);

    let eval = |a: &CVector, b: &CVector| -> Option<f64> {
        let q = match &kd.half_s2_diag {
            Some(diag) => b.iter().zip(diag).map(|(z, s)| z.norm_sqr() * s).sum(),
            None => b.dotc(&(&kd.half_s2 * b)).re,
        };
        if q >= -denom_floor {
            return None;
        }
        let num = a.dotc(&(w2 * b)).re;
        Some(a.dotc(&(w1 * a)).re - num * num / q)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(CVector, CVector)> =
        (0..samples).map(|_| (random_unit_vector(&mut rng, d), random_unit_vector(&mut rng, dd))).collect();
    let random = pairs.par_iter().filter_map(|(a, b)| eval(a, b)).map(|m| (m, 1usize));

    let coord = (0..d * dd).into_par_iter().filter_map(|idx| {
        let (i, j) = (idx / dd, idx % dd);
        let mut a = CVector::zeros(d);
        a[i] = c(1.0);
        let mut b = CVector::zeros(dd);
        b[j] = c(1.0);
        // ⟨a, W_1 a⟩ alone when b lies in the kernel.
        Some(eval(&a, &b).unwrap_or(w1[(i, i)].re))
    });
    let (worst, count) = random
        .chain(coord.map(|m| (m, 1usize)))
        .reduce(|| (f64::NEG_INFINITY, 0), |x, y| (x.0.max(y.0), x.1 + y.1));

    Ok(RelativeBoundMargin { worst_margin: worst, samples_evaluated: count, kernel_dim: kd.dim, kernel_residual: kd.residual })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorollaryReport {
    pub holds: bool,
    /// Largest sampled `‖W_2 b‖² / |⟨b, ½S_2(W_1) b⟩ λ_1|`.
    pub worst_ratio: f64,
    pub lambda1: f64,
}

/// Sampled check of `‖W_2 b‖² ≤ |⟨b, ½S_2(W_1) b⟩ λ_1|` with `λ_1` the
/// smallest nonzero eigenvalue magnitude of `−W_1`.
pub fn relative_bound_corollary(w1: &CMatrix, w2: &CMatrix, samples: usize, seed: u64) -> Result<CorollaryReport> {
    let kd = kernel_data(w1, w2)?;
    let w2_zero = max_abs(w2) == 0.0;
    let Some(lambda1) = kd.nonzero_min else {
        if w2_zero {
            return Ok(CorollaryReport { holds: true, worst_ratio: 0.0, lambda1: 0.0 });
        }
        return Err(Error::Unsupported("λ_1 = 0 and W_2 ≠ 0".into()));
    };
    if kd.residual > kernel_tol(w2) {
        return Err(Error::Unsupported(format!("kernel inclusion fails (residual {:e})", kd.residual)));
    }
    let dd = w1.nrows() * w1.nrows();
    let ratio = |b: &CVector| -> f64 {
        let lhs = (w2 * b).norm_squared();
        let rhs = (b.dotc(&(&kd.half_s2 * b)).re * lambda1).abs();
        if lhs <= kernel_tol(w2).powi(2) {
            0.0
        } else if rhs == 0.0 {
            f64::INFINITY
        } else {
            lhs / rhs
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bs: Vec<CVector> = (0..samples).map(|_| random_unit_vector(&mut rng, dd)).collect();
    let random = bs.par_iter().map(ratio).reduce(|| 0.0, f64::max);
    let coord = (0..dd)
        .into_par_iter()
        .map(|j| {
            let mut b = CVector::zeros(dd);
            b[j] = c(1.0);
            ratio(&b)
        })
        .reduce(|| 0.0, f64::max);
    let worst = random.max(coord);
    Ok(CorollaryReport { holds: worst <= 1.0 + 1e-10, worst_ratio: worst, lambda1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::carleman::{assemble, NonlinearSystem};
    use crate::linalg::{complex_gaussian_matrix, haar_unitary, random_hermitian_nsd};
    use proptest::prelude::*;

    fn scalar(v: f64) -> CMatrix {
        CMatrix::from_element(1, 1, c(v))
    }

    fn real(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
        CMatrix::from_row_slice(rows, cols, &data.iter().map(|&x| c(x)).collect::<Vec<_>>())
    }

    #[test]
    fn check_ws_examples() {
        assert!((check_ws(&(-crate::linalg::identity(2))).unwrap() + 1.0).abs() < 1e-14);
        assert!((check_ws(&real(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(check_ws(&CMatrix::zeros(2, 2)).unwrap(), 0.0);
    }

    #[test]
    fn check_lambda1_scalar_examples() {
        for b in [0.0, 0.3, 1.0, 2.0] {
            let got = check_lambda1(&scalar(-1.0), &scalar(b)).unwrap();
            assert!((got - (-1.0 + b)).abs() < 1e-14, "b = {b}: {got}");
        }
        let complex_b = CMatrix::from_element(1, 1, crate::linalg::C64::new(0.6, 0.8));
        assert!(check_lambda1(&scalar(-1.0), &complex_b).unwrap().abs() < 1e-14);
        assert!(matches!(check_lambda1(&scalar(-1.0), &CMatrix::zeros(1, 2)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn check_lambda1_without_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w1 = random_hermitian_nsd(&mut rng, 2, 1.0, -0.2);
        let got = check_lambda1(&w1, &CMatrix::zeros(2, 4)).unwrap();
        let s2 = symm_sum(&Operator::on_base(w1.clone()).unwrap(), 2).unwrap().into_matrix();
        let expected = check_ws(&w1).unwrap().max(hermitian_max_eigenvalue(&s2) / 2.0);
        assert!((got - expected).abs() < 1e-13);
    }

    #[test]
    fn certify_scalar_examples() {
        let sys = NonlinearSystem::scalar(&[-1.0, 1.0], 0.5).unwrap();
        let rep = certify(&assemble(&sys, 3).unwrap(), DEFAULT_TOL).unwrap();
        assert!(rep.all_pass(), "{rep:?}");
        assert!(rep.lambda_max_lambda1.abs() < 1e-14);
        assert_eq!(rep.implication_holds, Some(true));

        // With W_2 = 2 the full Hermitian part is still negative at N = 2
        // (λ_max = (√5 − 3)/2) and turns positive from N = 3 on.
        let sys = NonlinearSystem::scalar(&[-1.0, 2.0], 0.5).unwrap();
        let rep2 = certify(&assemble(&sys, 2).unwrap(), DEFAULT_TOL).unwrap();
        assert!(!rep2.record("Lambda1").unwrap().verdict.passed());
        assert!((rep2.lambda_max_full - (5f64.sqrt() - 3.0) / 2.0).abs() < 1e-14);
        let rep = certify(&assemble(&sys, 3).unwrap(), DEFAULT_TOL).unwrap();
        assert!((rep.lambda_max_full - 0.14510269120042255).abs() < 1e-12);
        assert_eq!(rep.implication_holds, None);
    }

    #[test]
    fn certify_negative_identity() {
        let sys = NonlinearSystem::quadratic(-crate::linalg::identity(2), CMatrix::zeros(2, 4), CVector::zeros(2)).unwrap();
        let rep = certify(&assemble(&sys, 3).unwrap(), DEFAULT_TOL).unwrap();
        assert!((rep.lambda_max_full + 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_json_shape() {
        let sys = NonlinearSystem::scalar(&[-1.0, 1.0], 0.5).unwrap();
        let rep = certify(&assemble(&sys, 2).unwrap(), DEFAULT_TOL).unwrap();
        let v: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        let first = &v.as_array().unwrap()[0];
        assert_eq!(first["certificate"], "W_S");
        assert_eq!(first["verdict"], "pass");
        assert!(first["lambda_max"].is_number() && first["tol"].is_number());
    }

    #[test]
    fn block_identity_matches_hermitian_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (d, n) in [(1, 4), (2, 3), (3, 2), (2, 1)] {
            let w1 = complex_gaussian_matrix(&mut rng, d, d);
            let w2 = complex_gaussian_matrix(&mut rng, d, d * d);
            let sys = NonlinearSystem::quadratic(w1, w2, CVector::zeros(d)).unwrap();
            let cs = assemble(&sys, n).unwrap();
            let diff = max_abs(&(hermitian_part(&cs.dense()) - hermitian_decomposition(&cs).unwrap()));
            assert!(diff < 1e-13, "d={d} n={n}: {diff}");
        }
    }

    #[test]
    fn critical_scale_puts_lambda1_on_boundary() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let w1 = random_hermitian_nsd(&mut rng, 2, 1.0, -0.3);
        let w2 = complex_gaussian_matrix(&mut rng, 2, 4);
        let t = lambda1_critical_scale(&w1, &w2).unwrap();
        assert!(check_lambda1(&w1, &(&w2 * c(t))).unwrap().abs() < 1e-12);
        assert!(check_lambda1(&w1, &(&w2 * c(1.01 * t))).unwrap() > 0.0);
    }

    #[test]
    fn relative_bound_scalar() {
        for (b, ok) in [(0.5, true), (1.0, true), (1.5, false)] {
            let m = nonlinear_relative_bound(&scalar(-1.0), &scalar(b), 200, 1).unwrap();
            assert!((m.worst_margin - (-1.0 + b * b)).abs() < 1e-12, "{m:?}");
            assert_eq!(m.holds(&scalar(-1.0), DEFAULT_TOL), ok);
        }
    }

    #[test]
    fn relative_bound_without_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let w1 = random_hermitian_nsd(&mut rng, 2, 1.0, -0.25);
        let m = nonlinear_relative_bound(&w1, &CMatrix::zeros(2, 4), 500, 2).unwrap();
        assert!(m.worst_margin <= -0.25 + 1e-12);
        assert!(m.worst_margin >= hermitian_eigen(&w1).0[0] - 1e-12);
    }

    #[test]
    fn kernel_inclusion_violation_is_reported() {
        let w1 = real(2, 2, &[0.0, 0.0, 0.0, -1.0]);
        let mut w2 = CMatrix::zeros(2, 4);
        w2[(1, 0)] = c(1.0);
        assert!(matches!(nonlinear_relative_bound(&w1, &w2, 10, 0), Err(Error::KernelInclusion { .. })));
        assert!(matches!(relative_bound_corollary(&w1, &w2, 10, 0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn corollary_examples() {
        let r = relative_bound_corollary(&scalar(-1.0), &scalar(1.0), 100, 0).unwrap();
        assert!(r.holds && (r.worst_ratio - 1.0).abs() < 1e-12);
        assert!(!relative_bound_corollary(&scalar(-1.0), &scalar(1.2), 100, 0).unwrap().holds);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let w1 = random_hermitian_nsd(&mut rng, 2, 1.0, -0.5);
        assert!(relative_bound_corollary(&w1, &CMatrix::zeros(2, 4), 100, 0).unwrap().holds);
    }

    #[test]
    fn corollary_detects_scaled_violation() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let w1 = random_hermitian_nsd(&mut rng, 2, 1.0, -0.5);
        let w2 = complex_gaussian_matrix(&mut rng, 2, 4);
        // Exact worst ratio: λ_max(P^{-1/2} W_2†W_2 P^{-1/2}) / λ_1 with P = −½S_2(W_1).
        let half = symm_sum(&Operator::on_base(w1.clone()).unwrap(), 2).unwrap().into_matrix() * c(0.5);
        let p_inv = inverse_sqrt_neg(&half).unwrap();
        let lambda1 = -hermitian_eigen(&w1).0[1];
        let worst = hermitian_max_eigenvalue(&hermitian_part(&(&p_inv * w2.adjoint() * &w2 * &p_inv))) / lambda1;
        let violating = &w2 * c((4.0 / worst).sqrt());
        let rep = relative_bound_corollary(&w1, &violating, 2000, 3).unwrap();
        assert!(!rep.holds);
        assert!(rep.worst_ratio <= 4.0 + 1e-9 && rep.worst_ratio > 1.0);
        let fine = &w2 * c((0.9 / worst).sqrt());
        assert!(relative_bound_corollary(&w1, &fine, 2000, 3).unwrap().holds);
    }

    fn random_certified(seed: u64, d: usize) -> (CMatrix, CMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = random_hermitian_nsd(&mut rng, d, 2.0, -0.1);
        let w2 = complex_gaussian_matrix(&mut rng, d, d * d);
        let t = lambda1_critical_scale(&w1, &w2).unwrap();
        (w1, w2 * c(0.999 * t))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn theorem_implication(seed in any::<u64>(), d in 1usize..=3, n in 1usize..=4) {
            prop_assume!(d < 3 || n <= 3);
            let (w1, w2) = random_certified(seed, d);
            let cs = assemble(&NonlinearSystem::quadratic(w1, w2, CVector::zeros(d)).unwrap(), n).unwrap();
            let rep = certify(&cs, DEFAULT_TOL).unwrap();
            prop_assert!(rep.hypotheses_pass());
            prop_assert!(rep.lambda_max_full <= 1e-9 * inf_norm(&cs.dense()).max(1.0));
            prop_assert_eq!(rep.implication_holds, Some(true));
        }

        #[test]
        fn tensor_lemma_blocks_stay_nsd(seed in any::<u64>(), k in 1usize..=3) {
            // Z_k inherits negativity from Λ_1 via the S_k lift.
            let (w1, w2) = random_certified(seed, 2);
            let z = z_block_hermitian(&w1, &w2, k).unwrap();
            prop_assert!(hermitian_max_eigenvalue(&z) <= 1e-10 * inf_norm(&z).max(1.0));
        }

        #[test]
        fn verdicts_unitarily_invariant(seed in any::<u64>()) {
            let d = 2;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w1 = complex_gaussian_matrix(&mut rng, d, d) - crate::linalg::identity(d) * c(1.5);
            let w2 = complex_gaussian_matrix(&mut rng, d, d * d) * c(0.4);
            let u = haar_unitary(&mut rng, d);
            let w1u = u.adjoint() * &w1 * &u;
            let w2u = u.adjoint() * &w2 * u.kronecker(&u);
            let a = check_lambda1(&w1, &w2).unwrap();
            let b = check_lambda1(&w1u, &w2u).unwrap();
            prop_assert!((a - b).abs() < 1e-11);
            prop_assert!((check_ws(&w1).unwrap() - check_ws(&w1u).unwrap()).abs() < 1e-11);
            let full = |x: &CMatrix, y: &CMatrix| {
                let cs = assemble(&NonlinearSystem::quadratic(x.clone(), y.clone(), CVector::zeros(d)).unwrap(), 3).unwrap();
                hermitian_max_eigenvalue(&hermitian_part(&cs.dense()))
            };
            prop_assert!((full(&w1, &w2) - full(&w1u, &w2u)).abs() < 1e-10);
        }
    }
}
