//! Relative bound of the off-diagonal Carleman part `B` with respect to the
//! block-diagonal part `A`, the resulting resolvent estimate, and the
//! reaction-diffusion instance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::carleman::{assemble, csr_apply, split_a_b, symmetrize, CarlemanSystem, NonlinearSystem};
use crate::dissipativity::Verdict;
use crate::error::{Error, Result};
use crate::linalg::{c, complex_gaussian, hermitian_max_eigenvalue, is_hermitian, spectral_norm, CMatrix, CVector, C64};
use crate::semigroup::{integrated_criterion, operator_norm, resolvent_dense, IntegratedCriterion, ResolventProbe};

/// `λ_1` must be below `−STRICT` for the bound to be defined.
const STRICT: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RelativeBoundReport {
    /// Largest 2-norm among `W_j`, `j ≥ 2`.
    pub gamma: f64,
    /// Magnitude of the largest eigenvalue of `W_1`.
    pub lambda1: f64,
    /// Number of nonzero `W_j`, `j ≥ 2`.
    pub active_terms: usize,
    pub a: f64,
    pub b: f64,
    pub empirical_max_ratio: f64,
    /// `‖Au‖² ≥ Σ_m m²|λ_1|²‖u_m‖²` held on every sample.
    pub diagonal_lower_bound: bool,
    pub samples: usize,
    pub closable: bool,
}

impl RelativeBoundReport {
    pub fn holds(&self) -> bool {
        self.empirical_max_ratio <= self.a * (1.0 + 1e-10) && self.diagonal_lower_bound
    }
}

/// Analytic `(γ, |λ_1|, J, a)` with `a = J γ / |λ_1|`.
pub fn analytic_a(sys: &NonlinearSystem) -> Result<(f64, f64, usize, f64)> {
    let w1 = sys.w1();
    if !is_hermitian(w1, 1e-12 * crate::linalg::max_abs(w1).max(1.0)) {
        return Err(Error::NotDissipative("W_1 is not Hermitian".into()));
    }
    let higher: Vec<&CMatrix> = sys.coefficients().iter().skip(1).filter(|op| !op.is_zero()).map(|op| op.matrix()).collect();
    let gamma = higher.iter().map(|w| spectral_norm(w)).fold(0.0, f64::max);
    let top = hermitian_max_eigenvalue(w1);
    if top >= -STRICT {
        if higher.is_empty() {
            return Ok((0.0, top.abs(), 0, 0.0));
        }
        return Err(Error::Unsupported(format!("λ_1 = {top:e} is not strictly negative")));
    }
    let a = higher.len() as f64 * gamma / top.abs();
    Ok((gamma, top.abs(), higher.len(), a))
}

/// Random finite-particle vector with each level scaled by `10^s`,
/// `s ∈ [−3, 3]`.
fn graded_vector(rng: &mut ChaCha8Rng, offsets: &[usize]) -> CVector {
    let mut v = CVector::zeros(*offsets.last().expect("offsets"));
    for w in offsets.windows(2) {
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let block = complex_gaussian(rng, w[1] - w[0]) * c(scale);
        v.rows_mut(w[0], w[1] - w[0]).copy_from(&block);
    }
    v
}

/// Analytic A-bound plus the sampled ratio `‖Bu‖/‖Au‖` on graded vectors of
/// `Fock_N`.
pub fn a_bound(sys: &NonlinearSystem, level: usize, samples: usize, seed: u64) -> Result<RelativeBoundReport> {
    let (gamma, lambda1, active, a) = analytic_a(sys)?;
    let cs = assemble(sys, level)?;
    let (am, bm) = split_a_b(&cs);
    let offsets = cs.offsets().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors: Vec<CVector> = (0..samples).map(|_| graded_vector(&mut rng, &offsets)).collect();
    let results: Vec<(f64, bool)> = vectors
        .par_iter()
        .map(|u| {
            let au = csr_apply(&am, u);
            let bu = csr_apply(&bm, u);
            let diag: f64 = offsets
                .windows(2)
                .enumerate()
                .map(|(k, w)| ((k + 1) as f64 * lambda1).powi(2) * u.rows(w[0], w[1] - w[0]).norm_squared())
                .sum();
            let au2 = au.norm_squared();
            let ratio = if au2 > 0.0 { bu.norm() / au2.sqrt() } else if bu.norm() == 0.0 { 0.0 } else { f64::INFINITY };
            (ratio, au2 >= diag * (1.0 - 1e-12))
        })
        .collect();
    Ok(RelativeBoundReport {
        gamma,
        lambda1,
        active_terms: active,
        a,
        b: 0.0,
        empirical_max_ratio: results.iter().map(|r| r.0).fold(0.0, f64::max),
        diagonal_lower_bound: results.iter().all(|r| r.1),
        samples,
        closable: a < 1.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeumannProbe {
    pub lambda: f64,
    /// `‖B R(λ, A)‖`.
    pub norm_br: f64,
    /// `2a + b/λ`.
    pub bound: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerturbedResolventReport {
    pub a: f64,
    pub b: f64,
    #[serde(rename = "M")]
    pub m: Option<f64>,
    pub omega: Option<f64>,
    pub applicable: bool,
    pub probes: Vec<ResolventProbe>,
    pub neumann: Vec<NeumannProbe>,
    pub verdict: Verdict,
}

impl PerturbedResolventReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn dense(m: &nalgebra_sparse::CsrMatrix<C64>) -> CMatrix {
    let mut out = CMatrix::zeros(m.nrows(), m.ncols());
    for (r, col, v) in m.triplet_iter() {
        out[(r, col)] = *v;
    }
    out
}

/// `‖R(λ, C_N)‖ ≤ M/(λ − ω)` with `M = 1/(1 − 2a)`, `ω = b/(1 − 2a)`, `b = 0`,
/// and the Neumann ingredient `‖B R(λ, A)‖ ≤ 2a + b/λ`. For `a ≥ 1/2` the
/// report is returned with `applicable = false` and no probes.
pub fn perturbed_resolvent_bound(sys: &NonlinearSystem, level: usize, lambdas: &[f64]) -> Result<PerturbedResolventReport> {
    let (_, _, _, a) = analytic_a(sys)?;
    let b = 0.0;
    if a >= 0.5 {
        return Ok(PerturbedResolventReport {
            a,
            b,
            m: None,
            omega: None,
            applicable: false,
            probes: Vec::new(),
            neumann: Vec::new(),
            verdict: Verdict::Fail,
        });
    }
    let m = 1.0 / (1.0 - 2.0 * a);
    let omega = b * m;
    if let Some(bad) = lambdas.iter().find(|&&l| l.is_nan() || l <= omega) {
        return Err(Error::InvalidArgument(format!("probe λ = {bad} must exceed ω = {omega}")));
    }
    let cs = assemble(sys, level)?;
    let full = cs.dense();
    let (am, bm) = split_a_b(&cs);
    let (ad, bd) = (dense(&am), dense(&bm));
    let results = lambdas
        .par_iter()
        .map(|&lambda| {
            let l = c(lambda);
            let bound = m / (lambda - omega);
            let probe = match resolvent_dense(&full, l) {
                Ok(r) => ResolventProbe::new(l, 1, operator_norm(&r), bound),
                Err(Error::SpectrumHit { .. }) => ResolventProbe::new(l, 1, f64::INFINITY, bound),
                Err(e) => return Err(e),
            };
            let norm_br = operator_norm(&(&bd * resolvent_dense(&ad, l)?));
            let nb = 2.0 * a + b / lambda;
            Ok((probe, NeumannProbe { lambda, norm_br, bound: nb, satisfied: norm_br <= nb * (1.0 + 1e-10) && nb < 1.0 }))
        })
        .collect::<Result<Vec<_>>>()?;
    let (probes, neumann): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let ok = probes.iter().all(|p| p.satisfied) && neumann.iter().all(|p| p.satisfied);
    Ok(PerturbedResolventReport { a, b, m: Some(m), omega: Some(omega), applicable: true, probes, neumann, verdict: Verdict::from_bool(ok) })
}

/// `‖W_p‖ < α/2` (strict).
pub fn reaction_diffusion_check(alpha: f64, wp_norm: f64) -> bool {
    alpha > 0.0 && wp_norm < alpha / 2.0
}

/// Periodic 3-point Laplacian on `d` points of the unit interval (`Δx = 1/d`).
pub fn periodic_laplacian(d: usize) -> CMatrix {
    let inv = (d * d) as f64;
    let mut l = CMatrix::zeros(d, d);
    for i in 0..d {
        l[(i, i)] += c(-2.0 * inv);
        l[(i, (i + 1) % d)] += c(inv);
        l[(i, (i + d - 1) % d)] += c(inv);
    }
    l
}

/// `u' = (Δ − α) u + W_p u^{⊗p}` with a real Gaussian `W_p`, symmetrized and
/// scaled to 2-norm `wp_norm`.
pub fn reaction_diffusion_system(d: usize, p: usize, alpha: f64, wp_norm: f64, seed: u64) -> Result<NonlinearSystem> {
    if p < 2 || d == 0 {
        return Err(Error::InvalidArgument("reaction-diffusion needs d ≥ 1 and p ≥ 2".into()));
    }
    let cols = crate::tensor::checked_pow(d, p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = CMatrix::from_fn(d, cols, |_, _| c(rng.sample::<f64, _>(StandardNormal)));
    let sym = symmetrize(&raw, d, p);
    let wp = &sym * c(wp_norm / spectral_norm(&sym));
    let w1 = periodic_laplacian(d) - CMatrix::identity(d, d) * c(alpha);
    let mut ws = vec![w1];
    for j in 2..p {
        ws.push(CMatrix::zeros(d, crate::tensor::checked_pow(d, j)?));
    }
    ws.push(wp);
    NonlinearSystem::new(ws, CVector::zeros(d))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReactionDiffusionStudy {
    pub alpha: f64,
    pub wp_norm: f64,
    pub threshold_ok: bool,
    pub bound: RelativeBoundReport,
    pub criterion: Option<IntegratedCriterion>,
    pub holds: bool,
}

/// Threshold check, A-bound, and the integrated criterion
/// `‖R(λ, C_N)‖ ≤ M/λ`, `M = 1/(1 − 2a)`, at the given probes.
pub fn reaction_diffusion_study(
    alpha: f64,
    wp_norm: f64,
    d: usize,
    p: usize,
    level: usize,
    lambdas: &[f64],
    seed: u64,
) -> Result<ReactionDiffusionStudy> {
    let sys = reaction_diffusion_system(d, p, alpha, wp_norm, seed)?;
    let threshold_ok = reaction_diffusion_check(alpha, wp_norm);
    let bound = a_bound(&sys, level, 200, seed)?;
    let criterion = if threshold_ok && bound.a < 0.5 {
        let cs: CarlemanSystem = assemble(&sys, level)?;
        let probes: Vec<C64> = lambdas.iter().map(|&l| c(l)).collect();
        Some(integrated_criterion(&cs, &probes, 1.0 / (1.0 - 2.0 * bound.a), 1.0, 0.0)?)
    } else {
        None
    };
    let holds = threshold_ok && bound.holds() && criterion.as_ref().is_some_and(|c| c.holds);
    Ok(ReactionDiffusionStudy { alpha, wp_norm, threshold_ok, bound, criterion, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermitian_eigenvalues, random_hermitian_nsd};
    use proptest::prelude::*;

    fn scalar(ws: &[f64]) -> NonlinearSystem {
        NonlinearSystem::scalar(ws, 0.1).unwrap()
    }

    #[test]
    fn a_bound_examples() {
        let rep = a_bound(&scalar(&[-1.0, 0.3]), 4, 1000, 1).unwrap();
        assert!((rep.a - 0.3).abs() < 1e-15);
        assert!(rep.holds() && rep.closable);
        assert!(rep.empirical_max_ratio > 0.2, "{}", rep.empirical_max_ratio);

        let lin = a_bound(&scalar(&[-1.0, 0.0]), 3, 50, 1).unwrap();
        assert_eq!((lin.a, lin.empirical_max_ratio), (0.0, 0.0));

        let cubic = a_bound(&scalar(&[-0.5, 0.2, 0.2]), 4, 500, 2).unwrap();
        assert!((cubic.a - 0.8).abs() < 1e-15);
        assert_eq!(cubic.active_terms, 2);
        assert!(cubic.holds());
    }

    #[test]
    fn a_bound_rejects_marginal_w1() {
        assert!(matches!(a_bound(&scalar(&[0.0, 0.3]), 3, 10, 1), Err(Error::Unsupported(_))));
        assert!(a_bound(&scalar(&[0.0, 0.0]), 3, 10, 1).is_ok());
        let w1 = CMatrix::from_row_slice(2, 2, &[c(-1.0), c(1.0), c(0.0), c(-1.0)]);
        let sys = NonlinearSystem::quadratic(w1, CMatrix::zeros(2, 4), CVector::zeros(2)).unwrap();
        assert!(matches!(a_bound(&sys, 2, 10, 1), Err(Error::NotDissipative(_))));
    }

    #[test]
    fn resolvent_bound_examples() {
        let rep = perturbed_resolvent_bound(&scalar(&[-1.0, 0.3]), 4, &[0.5, 1.0, 2.0, 10.0]).unwrap();
        assert!(rep.applicable);
        assert!((rep.m.unwrap() - 2.5).abs() < 1e-15);
        assert_eq!(rep.omega, Some(0.0));
        assert_eq!(rep.verdict, Verdict::Pass, "{rep:?}");
        for p in &rep.probes {
            assert!((p.bound - 2.5 / p.lambda_re).abs() < 1e-14);
        }

        // B = 0: ‖R(λ, A)‖ = 1/(λ + 1) ≤ 1/λ.
        let lin = perturbed_resolvent_bound(&scalar(&[-1.0, 0.0]), 3, &[1.0]).unwrap();
        assert_eq!(lin.m, Some(1.0));
        assert!((lin.probes[0].norm_r - 0.5).abs() < 1e-14);
        assert_eq!(lin.neumann[0].norm_br, 0.0);

        let big = perturbed_resolvent_bound(&scalar(&[-1.0, 0.6]), 3, &[1.0]).unwrap();
        assert!(!big.applicable && big.probes.is_empty());
        assert!(big.to_json().contains("\"M\": null"));
    }

    #[test]
    fn reaction_diffusion_threshold() {
        assert!(reaction_diffusion_check(1.0, 0.4));
        assert!(!reaction_diffusion_check(1.0, 0.5));
        assert!(!reaction_diffusion_check(0.0, 0.0));
    }

    #[test]
    fn laplacian_spectrum() {
        let vals = hermitian_eigenvalues(&periodic_laplacian(8));
        assert!(vals.last().unwrap().abs() < 1e-10);
        assert!((vals[0] + 4.0 * 64.0).abs() < 1e-9);
    }

    #[test]
    fn reaction_diffusion_instance() {
        let sys = reaction_diffusion_system(8, 3, 1.0, 0.4, 7).unwrap();
        let wp = sys.w(3).unwrap().matrix();
        assert!((spectral_norm(wp) - 0.4).abs() < 1e-12);
        assert!(sys.w(2).unwrap().is_zero());
        let study = reaction_diffusion_study(1.0, 0.4, 8, 3, 3, &[0.5, 1.0, 2.0, 10.0], 7).unwrap();
        assert!((study.bound.a - 0.4).abs() < 1e-10);
        assert!(study.holds, "{study:?}");
        let fail = reaction_diffusion_study(1.0, 0.5, 4, 3, 2, &[1.0], 7).unwrap();
        assert!(!fail.holds && fail.criterion.is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn empirical_ratio_below_analytic(seed in 0u64..1000, scale in 0.01f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w1 = random_hermitian_nsd(&mut rng, 2, 1.0, -0.3);
            let w2 = crate::linalg::complex_gaussian_matrix(&mut rng, 2, 4) * c(scale);
            let sys = NonlinearSystem::quadratic(w1, w2, CVector::zeros(2)).unwrap();
            let rep = a_bound(&sys, 3, 200, seed).unwrap();
            prop_assert!(rep.holds(), "{:?}", rep);
        }

        #[test]
        fn neumann_ingredient_holds(seed in 0u64..1000, lambda in 0.05f64..20.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w1 = random_hermitian_nsd(&mut rng, 2, 1.0, -0.5);
            let w2 = crate::linalg::complex_gaussian_matrix(&mut rng, 2, 4);
            let (_, l1, _, _) = analytic_a(&NonlinearSystem::quadratic(w1.clone(), w2.clone(), CVector::zeros(2)).unwrap()).unwrap();
            let w2 = &w2 * c(0.2 * l1 / spectral_norm(&w2));
            let sys = NonlinearSystem::quadratic(w1, w2, CVector::zeros(2)).unwrap();
            let rep = perturbed_resolvent_bound(&sys, 3, &[lambda]).unwrap();
            prop_assert!(rep.neumann[0].satisfied, "{:?}", rep.neumann);
            prop_assert!(rep.verdict.passed(), "{:?}", rep);
        }
    }
}
