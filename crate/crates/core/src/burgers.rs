//! Fourier-spectral discretization of the hyperviscous Burgers equation
//! `u_t = −(u²)_x / 2 − ν (−Δ)^M u` on the circle, basis `e_k = e^{ikx}/√(2π)`.
//!
//! Mode `k ∈ [−2n, 2n]` sits at index `k + 2n`. Inputs of the quadratic term
//! are restricted to `|k| ≤ n`, so products land in `|p| ≤ 2n`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::carleman::NonlinearSystem;
use crate::convergence::{nesting_deviation, FamilyMember, NestedFamily};
use crate::dissipativity::{check_ws, lambda1_matrix, nonlinear_relative_bound, CertificateRecord, Verdict, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_max_eigenvalue, inf_norm, random_unit_vector, CMatrix, CVector, C64};
use crate::oracle::{integrate_with, OracleSolution};

/// Default summation cutoffs for `K_M`.
pub const DEFAULT_CUTOFF_P: u64 = 200;
pub const DEFAULT_CUTOFF_M: u64 = 400;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDiscretization {
    n: usize,
    order: u32,
    nu: f64,
    w1: CMatrix,
    w2: CMatrix,
}

fn coupling(p: i64) -> C64 {
    C64::new(0.0, -(p as f64) / (2.0 * (2.0 * std::f64::consts::PI).sqrt()))
}

/// `W_1 = diag(−ν k^{2M})` on `|k| ≤ 2n` and `W_2 (e_m ⊗ e_{n'}) = −i p/(2√(2π)) e_p`,
/// `p = m + n'`, for `|m|, |n'| ≤ n`.
pub fn build_discretization(n: usize, order: u32, nu: f64) -> Result<SpectralDiscretization> {
    if order & 1 == 0 {
        return Err(Error::EvenOrder(order));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("mode cutoff n must be at least 1".into()));
    }
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::InvalidArgument(format!("viscosity must be positive, got {nu}")));
    }
    let d = 4 * n + 1;
    let half = 2 * n as i64;
    let w1 = CMatrix::from_fn(d, d, |r, col| {
        if r == col {
            let k = r as i64 - half;
            c(-nu * (k as f64).powi(2 * order as i32))
        } else {
            c(0.0)
        }
    });
    let mut w2 = CMatrix::zeros(d, d * d);
    let ni = n as i64;
    for m in -ni..=ni {
        for q in -ni..=ni {
            let p = m + q;
            let col = ((m + half) as usize) * d + (q + half) as usize;
            w2[((p + half) as usize, col)] = coupling(p);
        }
    }
    Ok(SpectralDiscretization { n, order, nu, w1, w2 })
}

impl SpectralDiscretization {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `4n + 1`.
    pub fn dim(&self) -> usize {
        4 * self.n + 1
    }

    pub fn w1(&self) -> &CMatrix {
        &self.w1
    }

    pub fn w2(&self) -> &CMatrix {
        &self.w2
    }

    pub fn mode_index(&self, k: i64) -> Option<usize> {
        let half = 2 * self.n as i64;
        (k.abs() <= half).then(|| (k + half) as usize)
    }

    pub fn mode(&self, index: usize) -> i64 {
        index as i64 - 2 * self.n as i64
    }

    /// Indices of the input modes `|k| ≤ n`.
    pub fn support(&self) -> Vec<usize> {
        (self.n..=3 * self.n).collect()
    }

    pub fn to_system(&self, phi0: CVector) -> Result<NonlinearSystem> {
        NonlinearSystem::quadratic(self.w1.clone(), self.w2.clone(), phi0)
    }

    /// Largest RK4-stable step not exceeding `h` for the stiffest mode.
    pub fn stable_step(&self, h: f64) -> f64 {
        let stiff = self.nu * (2.0 * self.n as f64).powi(2 * self.order as i32);
        h.min(2.5 / stiff)
    }

    /// Zero-pad or truncate a mode vector from another cutoff onto this one.
    pub fn transfer(&self, v: &CVector) -> Result<CVector> {
        if v.len() % 4 != 1 {
            return Err(Error::InvalidArgument("mode vectors have length 4n + 1".into()));
        }
        let src_half = (v.len() as i64 - 1) / 2;
        let mut out = CVector::zeros(self.dim());
        for (i, z) in v.iter().enumerate() {
            if let Some(j) = self.mode_index(i as i64 - src_half) {
                out[j] = *z;
            }
        }
        Ok(out)
    }
}

/// `a_{−k} = conj(a_k)` to `tol`.
pub fn is_real_field(v: &CVector, tol: f64) -> bool {
    let d = v.len();
    (0..d).all(|i| (v[i] - v[d - 1 - i].conj()).norm() <= tol)
}

/// Real-field data `a_0 = 0`, `a_k = amplitude · ρ^{|k|} (1 − i)/√2` for
/// `0 < k ≤ n`, `a_{−k} = conj(a_k)`, on the `4n + 1` modes of cutoff `n`.
pub fn geometric_real_field(n: usize, rho: f64, amplitude: f64) -> CVector {
    let d = 4 * n + 1;
    let half = 2 * n;
    let mut v = CVector::zeros(d);
    let phase = C64::new(1.0, -1.0) / 2f64.sqrt();
    for k in 1..=n {
        let a = phase * amplitude * rho.powi(k as i32);
        v[half + k] = a;
        v[half - k] = a.conj();
    }
    v
}

/// Amplitude for which the untruncated geometric series has 2-norm `norm`.
pub fn series_amplitude(rho: f64, norm: f64) -> f64 {
    norm * ((1.0 - rho * rho) / (2.0 * rho * rho)).sqrt()
}

/// `K_M` partial sum and tail estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KmEstimate {
    #[serde(rename = "M")]
    pub order: u32,
    #[serde(rename = "cutoff_P")]
    pub cutoff_p: u64,
    pub cutoff_m: u64,
    pub value: f64,
    pub tail: f64,
}

impl KmEstimate {
    pub fn total(&self) -> f64 {
        self.value + self.tail
    }
}

/// `(1/4π) p² / (m^{2M} + (p−m)^{2M})`.
pub fn km_term(order: u32, p: i64, m: i64) -> f64 {
    let e = 2 * order as i32;
    let q = p - m;
    (p * p) as f64 / (4.0 * std::f64::consts::PI * ((m as f64).powi(e) + (q as f64).powi(e)))
}

/// `Σ_{|m| ≤ cutoff_m} km_term(p, m)`.
fn km_inner(order: u32, p: i64, cutoff_m: i64) -> f64 {
    (-cutoff_m..=cutoff_m).map(|m| km_term(order, p, m)).sum()
}

/// `K_M = (1/4π) Σ_{p≠0} Σ_{m+n=p} p²/(m^{2M} + n^{2M})` over `0 < |p| ≤ P`,
/// `|m| ≤ cutoff_m`, plus the tail `C Σ_{|p|>P} |p|^{3−2M}` with `C` twice the
/// last inner sum over `P^{3−2M}` and the sum bounded by an integral.
pub fn compute_km(order: u32, cutoff_p: u64, cutoff_m: u64) -> Result<KmEstimate> {
    if order <= 2 {
        return Err(Error::DivergentOrder(order));
    }
    if cutoff_p == 0 || cutoff_m < cutoff_p {
        return Err(Error::InvalidArgument("K_M needs 0 < cutoff_P ≤ cutoff_m".into()));
    }
    let cm = cutoff_m as i64;
    let inner: Vec<f64> = (1..=cutoff_p as i64).into_par_iter().map(|p| km_inner(order, p, cm)).collect();
    // Terms for −p mirror those for p under m ↦ −m.
    let value = 2.0 * inner.iter().sum::<f64>();
    let pf = cutoff_p as f64;
    let decay = 3.0 - 2.0 * order as f64;
    let constant = 2.0 * inner.last().copied().unwrap_or(0.0) / pf.powf(decay);
    let tail_sum = 2.0 * pf.powf(decay + 1.0) / (2.0 * order as f64 - 4.0);
    Ok(KmEstimate { order, cutoff_p, cutoff_m, value, tail: constant * tail_sum })
}

/// `√(K̂_M + tail)` at the default cutoffs.
pub fn viscosity_threshold(order: u32) -> Result<f64> {
    Ok(compute_km(order, DEFAULT_CUTOFF_P, DEFAULT_CUTOFF_M)?.total().sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralReport {
    pub n: usize,
    pub order: u32,
    pub nu: f64,
    pub lambda_max_ws: f64,
    /// `λ_max(Λ_1)` over `H_{2n} ⊕ H_n^{⊗2}`.
    pub lambda_max_lambda1: f64,
    pub relative_margin: Option<f64>,
    pub kernel_residual: Option<f64>,
    /// Restriction mismatch between cutoffs `n` and `n + 1`.
    pub nesting_deviation: f64,
    pub records: Vec<CertificateRecord>,
    pub failures: Vec<String>,
}

impl SpectralReport {
    pub fn all_pass(&self) -> bool {
        self.failures.is_empty() && self.records.iter().all(|r| r.verdict.passed())
    }
}

/// `Λ_1` restricted to level-1 modes `|k| ≤ 2n` and level-2 pairs with both
/// modes in `|k| ≤ n` (the only pairs `W_2` sees).
pub fn restricted_lambda1(disc: &SpectralDiscretization) -> CMatrix {
    let d = disc.dim();
    let support = disc.support();
    let pairs: Vec<(usize, usize)> = support.iter().flat_map(|&i| support.iter().map(move |&j| (i, j))).collect();
    let size = d + pairs.len();
    let mut out = CMatrix::zeros(size, size);
    for i in 0..d {
        out[(i, i)] = disc.w1[(i, i)];
    }
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let col = i * d + j;
        out[(d + k, d + k)] = (disc.w1[(i, i)] + disc.w1[(j, j)]) * 0.5;
        for r in 0..d {
            let v = disc.w2[(r, col)];
            out[(r, d + k)] = v;
            out[(d + k, r)] = v.conj();
        }
    }
    out
}

/// Λ_1 certificate, sampled nonlinear relative bound (with kernel check) and
/// the nesting comparison against cutoff `n + 1`.
pub fn certify_spectral(disc: &SpectralDiscretization, samples: usize, seed: u64) -> Result<SpectralReport> {
    let lambda_ws = check_ws(&disc.w1)?;
    let lam1 = restricted_lambda1(disc);
    let lambda_l1 = hermitian_max_eigenvalue(&lam1);
    let mut failures = Vec::new();
    let (relative_margin, kernel_residual, rel_record) = match nonlinear_relative_bound(&disc.w1, &disc.w2, samples, seed) {
        Ok(m) => {
            let tol = DEFAULT_TOL * inf_norm(&disc.w1).max(1.0);
            (Some(m.worst_margin), Some(m.kernel_residual), Some(CertificateRecord::new("relative_bound", m.worst_margin, tol)))
        }
        Err(e) => {
            failures.push(e.to_string());
            (None, None, None)
        }
    };
    let next = build_discretization(disc.n + 1, disc.order, disc.nu)?;
    let nesting = nesting_deviation(&member(disc, disc.n + 1)?, &member(&next, disc.n + 1)?)?;
    if nesting > 1e-12 {
        failures.push(format!("nesting deviation {nesting:e} between n = {} and n = {}", disc.n, disc.n + 1));
    }
    let mut records = vec![
        CertificateRecord::new("W_S", lambda_ws, DEFAULT_TOL * inf_norm(&disc.w1).max(1.0)),
        CertificateRecord::new("Lambda1", lambda_l1, DEFAULT_TOL * inf_norm(&lam1).max(1.0)),
    ];
    records.extend(rel_record);
    Ok(SpectralReport {
        n: disc.n,
        order: disc.order,
        nu: disc.nu,
        lambda_max_ws: lambda_ws,
        lambda_max_lambda1: lambda_l1,
        relative_margin,
        kernel_residual,
        nesting_deviation: nesting,
        records,
        failures,
    })
}

/// Member with zero data, modes placed in the basis of cutoff `ambient`.
fn member(disc: &SpectralDiscretization, ambient: usize) -> Result<FamilyMember> {
    let d = disc.dim();
    let offset = 2 * (ambient - disc.n);
    Ok(FamilyMember {
        label: disc.n,
        system: disc.to_system(CVector::zeros(d))?,
        embedding: (0..d).map(|i| i + offset).collect(),
        support: disc.support(),
    })
}

/// Largest sampled `|(Re⟨a,W_2b⟩)² / ⟨b,½S_2(W_1)b⟩| · ν / (‖a‖² K)` over unit
/// `a ⊥ e_0`, `b` with a nonzero quadratic form; at most `1` when the
/// cross-term estimate with constant `K` holds.
pub fn cross_bound_ratio(disc: &SpectralDiscretization, km: f64, samples: usize, seed: u64) -> f64 {
    let d = disc.dim();
    let zero = disc.mode_index(0).expect("mode 0 exists");
    let half_s2: Vec<f64> = (0..d * d).map(|idx| 0.5 * (disc.w1[(idx / d, idx / d)].re + disc.w1[(idx % d, idx % d)].re)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(CVector, CVector)> = (0..samples)
        .map(|_| {
            let mut a = random_unit_vector(&mut rng, d);
            a[zero] = c(0.0);
            let a = a.unscale(a.norm());
            (a, random_unit_vector(&mut rng, d * d))
        })
        .collect();
    pairs
        .par_iter()
        .map(|(a, b)| {
            let q: f64 = b.iter().zip(&half_s2).map(|(z, s)| z.norm_sqr() * s).sum();
            if q >= 0.0 {
                return 0.0;
            }
            let num = a.dotc(&(&disc.w2 * b)).re;
            (num * num / q).abs() * disc.nu / (a.norm_squared() * km)
        })
        .reduce(|| 0.0, f64::max)
}

/// RK4 on the mode equations
/// `ȧ_p = −ν p^{2M} a_p − (i p / (2√(2π))) Σ_{m+n'=p, |m|,|n'|≤n} a_m a_{n'}`,
/// written as an explicit convolution.
pub fn pseudospectral_reference(disc: &SpectralDiscretization, u0: &CVector, times: &[f64], h: f64) -> Result<OracleSolution> {
    let d = disc.dim();
    if u0.len() != d {
        return Err(Error::DimensionMismatch { context: "Burgers initial modes", expected: d, found: u0.len() });
    }
    let n = disc.n as i64;
    let half = 2 * n;
    if (0..d).any(|i| (i as i64 - half).abs() > n && u0[i] != c(0.0)) {
        return Err(Error::InvalidArgument("initial data must be supported on |k| ≤ n".into()));
    }
    if !is_real_field(u0, 1e-14 * u0.norm().max(1.0)) {
        return Err(Error::InvalidArgument("initial data violates a_{-k} = conj(a_k)".into()));
    }
    let decay: Vec<f64> = (0..d).map(|i| disc.nu * ((i as i64 - half) as f64).powi(2 * disc.order as i32)).collect();
    let rhs = |a: &CVector| {
        let mut out = CVector::zeros(d);
        for pi in 0..d {
            let p = pi as i64 - half;
            let mut conv = c(0.0);
            for m in (p - n).max(-n)..=(p + n).min(n) {
                conv += a[(m + half) as usize] * a[(p - m + half) as usize];
            }
            out[pi] = a[pi] * (-decay[pi]) + coupling(p) * conv;
        }
        out
    };
    integrate_with(rhs, u0.clone(), times, h)
}

/// Family of discretizations at the given cutoffs sharing viscosity and
/// order; initial data are projections of one geometric real field.
pub fn burgers_family(cutoffs: &[usize], order: u32, nu: f64, rho: f64, norm: f64) -> Result<NestedFamily> {
    let n_max = *cutoffs.iter().max().ok_or_else(|| Error::InvalidArgument("no cutoffs".into()))?;
    if cutoffs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("cutoffs must be strictly increasing".into()));
    }
    let amplitude = series_amplitude(rho, norm);
    let members = cutoffs
        .iter()
        .map(|&n| {
            let disc = build_discretization(n, order, nu)?;
            let d = disc.dim();
            let offset = 2 * (n_max - n);
            Ok(FamilyMember {
                label: n,
                system: disc.to_system(geometric_real_field(n, rho, amplitude))?,
                embedding: (0..d).map(|i| i + offset).collect(),
                support: disc.support(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    NestedFamily::new(members)
}

/// Verdict helper for callers that only need pass/fail.
pub fn verdict(report: &SpectralReport) -> Verdict {
    Verdict::from_bool(report.all_pass())
}

/// Full (unrestricted) `Λ_1` of the discretization over `H_{2n} ⊕ H_{2n}^{⊗2}`.
pub fn full_lambda1(disc: &SpectralDiscretization) -> Result<CMatrix> {
    lambda1_matrix(&disc.w1, &disc.w2)
}
