//! Time evolution of truncated Carleman systems and resolvent probes.

use std::collections::HashMap;

use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::carleman::{complex_eigenvalues, csr_apply, CarlemanSystem};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, c, complex_gaussian, inf_norm, one_norm, spectral_norm, CMatrix, CVector, C64};
use crate::tensor::FockVector;

/// Dense `expm` is used by [`EvolutionMethod::Auto`] up to this dimension.
pub const DENSE_LIMIT: usize = 512;

/// Step used by [`EvolutionMethod::Auto`] above [`DENSE_LIMIT`].
pub const AUTO_STEP: f64 = 1e-3;

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0, 2162160.0, 110880.0, 3960.0, 90.0, 1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [(usize, f64); 4] =
    [(3, 1.495585217958292e-2), (5, 2.53939833006323e-1), (7, 9.504178996162932e-1), (9, 2.097847961257068)];
const THETA13: f64 = 5.371920351148152;

/// `exp(t·M)` by scaling and squaring with a diagonal Padé approximant of
/// degree 3, 5, 7, 9 or 13 chosen from the 1-norm.
pub fn expm(m: &CMatrix, t: f64) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if !t.is_finite() || !all_finite(m) {
        return Err(Error::NonFinite("expm input"));
    }
    let n = m.nrows();
    let a = m * c(t);
    let norm = one_norm(&a);
    if !norm.is_finite() {
        return Err(Error::Overflow { norm });
    }
    let ident = CMatrix::identity(n, n);
    if norm == 0.0 {
        return Ok(ident);
    }

    for &(deg, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match deg {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(&a, coeffs);
            return finish(pade_solve(&u, &v)?, norm);
        }
    }

    let s = (norm / THETA13).log2().ceil().max(0.0) as i32;
    if s > 1000 {
        return Err(Error::Overflow { norm });
    }
    let a = a * c(0.5f64.powi(s));
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * c(b[13]) + &a4 * c(b[11]) + &a2 * c(b[9]))
        + &a6 * c(b[7])
        + &a4 * c(b[5])
        + &a2 * c(b[3])
        + &ident * c(b[1]);
    let u = &a * inner_u;
    let v = &a6 * (&a6 * c(b[12]) + &a4 * c(b[10]) + &a2 * c(b[8]))
        + &a6 * c(b[6])
        + &a4 * c(b[4])
        + &a2 * c(b[2])
        + &ident * c(b[0]);
    let mut r = pade_solve(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    finish(r, norm)
}

fn pade_low(a: &CMatrix, b: &[f64]) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let a2 = a * a;
    let mut u_inner = CMatrix::zeros(n, n);
    let mut v = CMatrix::zeros(n, n);
    let mut power = CMatrix::identity(n, n);
    for k in (0..b.len()).step_by(2) {
        v += &power * c(b[k]);
        u_inner += &power * c(b[k + 1]);
        power = &power * &a2;
    }
    (a * u_inner, v)
}

fn pade_solve(u: &CMatrix, v: &CMatrix) -> Result<CMatrix> {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).ok_or(Error::Overflow { norm: f64::INFINITY })
}

fn finish(r: CMatrix, norm: f64) -> Result<CMatrix> {
    if all_finite(&r) {
        Ok(r)
    } else {
        Err(Error::Overflow { norm })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum EvolutionMethod {
    /// Dense matrix exponential per output time.
    Expm,
    /// Classical RK4 with steps no larger than `step`.
    Rk4 { step: f64 },
    /// Exponential time differencing RK4: the diagonal of `C_N` is
    /// integrated exactly, the off-diagonal remainder explicitly.
    Etdrk4 { step: f64 },
    /// `Expm` up to [`DENSE_LIMIT`], otherwise `Etdrk4` at [`AUTO_STEP`].
    Auto,
}

impl EvolutionMethod {
    pub fn resolve(self, dim: usize) -> Self {
        match self {
            EvolutionMethod::Auto if dim <= DENSE_LIMIT => EvolutionMethod::Expm,
            EvolutionMethod::Auto => EvolutionMethod::Etdrk4 { step: AUTO_STEP },
            other => other,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub states: Vec<FockVector>,
    /// The method actually used (`Auto` resolved).
    pub method: EvolutionMethod,
    /// Total fixed steps taken (zero for `Expm`).
    pub steps: usize,
}

impl EvolutionResult {
    pub fn level1(&self) -> Vec<CVector> {
        self.states.iter().map(|s| s.levels()[0].clone()).collect()
    }
}

/// Evolve `v0` under `e^{t C_N}` and record the state at each grid time.
/// The grid must be non-empty, non-negative and strictly increasing.
pub fn evolve(cs: &CarlemanSystem, v0: &FockVector, times: &[f64], method: EvolutionMethod) -> Result<EvolutionResult> {
    if times.is_empty() {
        return Err(Error::InvalidArgument("time grid is empty".into()));
    }
    if times[0] < 0.0 || times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("time grid must be non-negative and strictly increasing".into()));
    }
    if v0.base_dim() != cs.base_dim() || v0.num_levels() != cs.level() {
        return Err(Error::DimensionMismatch { context: "initial Fock vector levels", expected: cs.level(), found: v0.num_levels() });
    }
    let d = cs.base_dim();
    let n = cs.level();
    let x0 = v0.to_flat();
    let method = method.resolve(cs.dim());
    let (flat, steps) = match method {
        EvolutionMethod::Expm => {
            let dense = cs.dense();
            let states = times
                .par_iter()
                .map(|&t| Ok(expm(&dense, t)? * &x0))
                .collect::<Result<Vec<_>>>()?;
            (states, 0)
        }
        EvolutionMethod::Rk4 { step } => {
            check_step(step)?;
            march(times, x0, step, |x, h| Ok(rk4_linear(cs, x, h)))?
        }
        EvolutionMethod::Etdrk4 { step } => {
            check_step(step)?;
            let stepper = Etdrk4::new(cs);
            let rho = stepper.diag.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let first = if rho > 0.0 { step.min(0.05 / rho) } else { step };
            let mut cache: HashMap<u64, EtdCoeffs> = HashMap::new();
            march_graded(times, x0, step, first, |x, h| {
                let coeffs = cache.entry(h.to_bits()).or_insert_with(|| EtdCoeffs::new(&stepper.diag, h));
                Ok(stepper.step(x, coeffs))
            })?
        }
        EvolutionMethod::Auto => unreachable!("resolved above"),
    };
    let states = flat
        .into_iter()
        .map(|x| {
            if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::BlowUp { time: *times.last().unwrap(), norm: f64::INFINITY });
            }
            FockVector::from_flat(d, n, x.as_slice())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvolutionResult { times: times.to_vec(), states, method, steps })
}

fn check_step(step: f64) -> Result<()> {
    if step.is_finite() && step > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step must be positive, got {step}")))
    }
}

/// Advance through the grid with equal sub-steps of size at most `step` in each
/// interval.
fn march(
    times: &[f64],
    x0: CVector,
    step: f64,
    mut advance: impl FnMut(&CVector, f64) -> Result<CVector>,
) -> Result<(Vec<CVector>, usize)> {
    let mut out = Vec::with_capacity(times.len());
    let mut x = x0;
    let mut t = 0.0;
    let mut total = 0;
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let count = (span / step - 1e-9).ceil().max(1.0) as usize;
            let h = span / count as f64;
            for _ in 0..count {
                x = advance(&x, h)?;
            }
            total += count;
        }
        t = target;
        out.push(x.clone());
    }
    Ok((out, total))
}

/// Like [`march`], but starts with steps growing geometrically from `first`
/// (ratio 1.25) until `step` is reached, resolving the initial transient of
/// stiff modes.
fn march_graded(
    times: &[f64],
    x0: CVector,
    step: f64,
    first: f64,
    mut advance: impl FnMut(&CVector, f64) -> Result<CVector>,
) -> Result<(Vec<CVector>, usize)> {
    let start = x0.clone();
    let mut x = x0;
    let mut taken = 0;
    let mut t = 0.0;
    let mut h = first;
    let end = times.last().copied().unwrap_or(0.0);
    let warm_end = times.iter().copied().find(|&s| s > 0.0).unwrap_or(0.0);
    while h < step && t + h < warm_end.min(end) {
        x = advance(&x, h)?;
        t += h;
        taken += 1;
        h *= 1.25;
    }
    let shifted: Vec<f64> = times.iter().map(|&s| (s - t).max(0.0)).collect();
    let (mut out, more) = march(&shifted, x, step, advance)?;
    // Only t = 0 can precede the warm-up steps.
    if times[0] == 0.0 {
        out[0] = start;
    }
    Ok((out, taken + more))
}

fn rk4_linear(cs: &CarlemanSystem, x: &CVector, h: f64) -> CVector {
    let hc = c(h);
    let k1 = cs.apply(x);
    let k2 = cs.apply(&(x + &k1 * (hc * 0.5)));
    let k3 = cs.apply(&(x + &k2 * (hc * 0.5)));
    let k4 = cs.apply(&(x + &k3 * hc));
    x + (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * (hc / 6.0)
}

struct Etdrk4 {
    diag: CVector,
    rest: CsrMatrix<C64>,
}

impl Etdrk4 {
    fn new(cs: &CarlemanSystem) -> Self {
        let n = cs.dim();
        let mut coo = CooMatrix::new(n, n);
        for (r, col, v) in cs.matrix().triplet_iter() {
            if r != col {
                coo.push(r, col, *v);
            }
        }
        Self { diag: cs.diagonal(), rest: CsrMatrix::from(&coo) }
    }

    fn step(&self, v: &CVector, k: &EtdCoeffs) -> CVector {
        let b = |x: &CVector| csr_apply(&self.rest, x);
        let nv = b(v);
        let a = k.e2.component_mul(v) + k.q.component_mul(&nv);
        let na = b(&a);
        let bb = k.e2.component_mul(v) + k.q.component_mul(&na);
        let nb = b(&bb);
        let cc = k.e2.component_mul(&a) + k.q.component_mul(&(&nb * c(2.0) - &nv));
        let nc = b(&cc);
        k.e.component_mul(v)
            + k.f1.component_mul(&nv)
            + k.f2.component_mul(&(na + nb)) * c(2.0)
            + k.f3.component_mul(&nc)
    }
}

struct EtdCoeffs {
    e: CVector,
    e2: CVector,
    q: CVector,
    f1: CVector,
    f2: CVector,
    f3: CVector,
}

impl EtdCoeffs {
    /// φ-function weights by contour averaging over the unit circle around
    /// each `h·L_i`, which avoids cancellation near zero.
    fn new(diag: &CVector, h: f64) -> Self {
        const POINTS: usize = 64;
        let roots: Vec<C64> = (0..POINTS)
            .map(|k| C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / POINTS as f64))
            .collect();
        let n = diag.len();
        let mut out = Self {
            e: CVector::zeros(n),
            e2: CVector::zeros(n),
            q: CVector::zeros(n),
            f1: CVector::zeros(n),
            f2: CVector::zeros(n),
            f3: CVector::zeros(n),
        };
        for i in 0..n {
            let z = diag[i] * h;
            out.e[i] = z.exp();
            out.e2[i] = (z * 0.5).exp();
            let (mut q, mut f1, mut f2, mut f3) = (c(0.0), c(0.0), c(0.0), c(0.0));
            for r in &roots {
                let w = z + r;
                let ew = w.exp();
                let w3 = w * w * w;
                q += ((w * 0.5).exp() - 1.0) / w;
                f1 += (-4.0 - w + ew * (4.0 - w * 3.0 + w * w)) / w3;
                f2 += (2.0 + w + ew * (w - 2.0)) / w3;
                f3 += (-4.0 - w * 3.0 - w * w + ew * (4.0 - w)) / w3;
            }
            let scale = h / POINTS as f64;
            out.q[i] = q * scale;
            out.f1[i] = f1 * scale;
            out.f2[i] = f2 * scale;
            out.f3[i] = f3 * scale;
        }
        out
    }
}

/// `max ‖e^{tC_N} v‖_Q / ‖v‖_Q` over random `v` and the given times.
pub fn contractivity_check(cs: &CarlemanSystem, trials: usize, times: &[f64], seed: u64) -> Result<f64> {
    let dense = cs.dense();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vs: Vec<CVector> = (0..trials).map(|_| complex_gaussian(&mut rng, cs.dim())).collect();
    let ratios = times
        .par_iter()
        .map(|&t| {
            let e = expm(&dense, t)?;
            Ok(vs.iter().map(|v| (&e * v).norm() / v.norm()).fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

/// `(λI − C_N)^{-1}`; a failed or inaccurate solve is reported as a spectrum hit.
pub fn resolvent(cs: &CarlemanSystem, lambda: C64) -> Result<CMatrix> {
    resolvent_dense(&cs.dense(), lambda)
}

pub fn resolvent_dense(m: &CMatrix, lambda: C64) -> Result<CMatrix> {
    let n = m.nrows();
    let shifted = CMatrix::identity(n, n) * lambda - m;
    let hit = |residual: f64| Error::SpectrumHit { re: lambda.re, im: lambda.im, residual };
    let x = shifted.clone().lu().try_inverse().ok_or_else(|| hit(f64::INFINITY))?;
    if !all_finite(&x) {
        return Err(hit(f64::INFINITY));
    }
    let residual = inf_norm(&(&shifted * &x - CMatrix::identity(n, n)));
    if residual > 1e-10 {
        return Err(hit(residual));
    }
    Ok(x)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolventProbe {
    pub lambda_re: f64,
    pub lambda_im: f64,
    /// Power `n` in `‖R(λ)^n‖`.
    pub power: usize,
    pub norm_r: f64,
    pub bound: f64,
    /// No eigenvalue of `C_N` lies to the right of `ω` (always true outside
    /// [`fmp_scan`]).
    pub spectrum_ok: bool,
    pub satisfied: bool,
}

impl ResolventProbe {
    pub(crate) fn new(lambda: C64, power: usize, norm_r: f64, bound: f64) -> Self {
        let satisfied = norm_r <= bound * (1.0 + 1e-8);
        Self { lambda_re: lambda.re, lambda_im: lambda.im, power, norm_r, bound, spectrum_ok: true, satisfied }
    }

    fn require_spectrum(mut self, ok: bool) -> Self {
        self.spectrum_ok = ok;
        self.satisfied &= ok;
        self
    }
}

/// Largest singular value; power iteration on `X†X` above [`DENSE_LIMIT`].
pub fn operator_norm(x: &CMatrix) -> f64 {
    if x.nrows() <= DENSE_LIMIT {
        return spectral_norm(x);
    }
    let mut v = CVector::from_element(x.ncols(), c(1.0));
    v.unscale_mut(v.norm());
    let mut sigma = 0.0;
    for _ in 0..500 {
        let w = x.adjoint() * (x * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm.sqrt();
        v = w.unscale(norm);
        if (next - sigma).abs() <= 1e-12 * next {
            return next;
        }
        sigma = next;
    }
    sigma
}

/// Feller–Miyadera–Phillips probes `‖R(λ)^n‖ ≤ M/(λ − ω)^n`, `n = 1..=nmax`.
/// The theorem also needs the half-plane `Re λ > ω` free of spectrum; a probe
/// counts as satisfied only if the spectral abscissa of `C_N` is at most `ω`.
pub fn fmp_scan(cs: &CarlemanSystem, lambdas: &[f64], m: f64, omega: f64, nmax: usize) -> Result<Vec<ResolventProbe>> {
    if let Some(bad) = lambdas.iter().find(|&&l| l <= omega) {
        return Err(Error::InvalidArgument(format!("probe λ = {bad} must exceed ω = {omega}")));
    }
    let dense = cs.dense();
    let abscissa = complex_eigenvalues(&dense).iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let spectrum_ok = abscissa <= omega + 1e-10 * inf_norm(&dense).max(1.0);
    let per_lambda = lambdas
        .par_iter()
        .map(|&l| {
            let lambda = c(l);
            let probes = match resolvent_dense(&dense, lambda) {
                Ok(r) => {
                    let mut power = r.clone();
                    (1..=nmax)
                        .map(|k| {
                            if k > 1 {
                                power = &power * &r;
                            }
                            ResolventProbe::new(lambda, k, operator_norm(&power), m / (l - omega).powi(k as i32))
                                .require_spectrum(spectrum_ok)
                        })
                        .collect()
                }
                Err(Error::SpectrumHit { .. }) => (1..=nmax)
                    .map(|k| {
                        ResolventProbe::new(lambda, k, f64::INFINITY, m / (l - omega).powi(k as i32)).require_spectrum(spectrum_ok)
                    })
                    .collect(),
                Err(e) => return Err(e),
            };
            Ok(probes)
        })
        .collect::<Result<Vec<Vec<_>>>>()?;
    Ok(per_lambda.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntegratedCriterion {
    pub holds: bool,
    pub m: f64,
    pub b: f64,
    pub omega: f64,
    pub probes: Vec<ResolventProbe>,
}

/// Checks `‖R(λ, C_N)‖ ≤ M |λ|^{-b}` on the probe set (all `Re λ > ω`).
pub fn integrated_criterion(cs: &CarlemanSystem, lambdas: &[C64], m: f64, b: f64, omega: f64) -> Result<IntegratedCriterion> {
    integrated_criterion_dense(&cs.dense(), lambdas, m, b, omega)
}

pub fn integrated_criterion_dense(dense: &CMatrix, lambdas: &[C64], m: f64, b: f64, omega: f64) -> Result<IntegratedCriterion> {
    if let Some(bad) = lambdas.iter().find(|l| l.re <= omega) {
        return Err(Error::InvalidArgument(format!("probe Re λ = {} must exceed ω = {omega}", bad.re)));
    }
    let probes = lambdas
        .par_iter()
        .map(|&lambda| {
            let bound = m * lambda.norm().powf(-b);
            match resolvent_dense(dense, lambda) {
                Ok(r) => Ok(ResolventProbe::new(lambda, 1, operator_norm(&r), bound)),
                Err(Error::SpectrumHit { .. }) => Ok(ResolventProbe::new(lambda, 1, f64::INFINITY, bound)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IntegratedCriterion { holds: probes.iter().all(|p| p.satisfied), m, b, omega, probes })
}
