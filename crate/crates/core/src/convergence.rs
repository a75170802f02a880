//! Error-versus-level and error-versus-discretization sweeps.

use rayon::prelude::*;
use serde::Serialize;

use crate::carleman::{assemble, parameter_r, rescale, NonlinearSystem};
use crate::dissipativity::{check_lambda1, check_ws, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::linalg::{inf_norm, tensor_power, CVector, C64};
use crate::oracle::{integrate, least_squares_slope};
use crate::semigroup::{evolve, EvolutionMethod};

/// Errors below this are treated as the numerical floor and excluded from the
/// geometric fit.
pub const FIT_FLOOR: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    pub method: EvolutionMethod,
    /// RK4 step of the nonlinear oracle.
    pub oracle_step: f64,
    /// Use this as `u(t)` instead of integrating the oracle.
    pub reference: Option<CVector>,
    /// Rescaling factor `M`; `None` rescales by `2‖φ_0‖` only when `‖φ_0‖ ≥ 1`.
    pub scale: Option<f64>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { method: EvolutionMethod::Auto, oracle_step: 1e-3, reference: None, scale: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep_var: usize,
    pub e1: f64,
    pub eta2: Option<f64>,
    pub eta3: Option<f64>,
    pub bound_eta1: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRun {
    /// `"N"` for level sweeps, `"n"` (or another index name) for
    /// discretization sweeps.
    pub sweep_name: String,
    pub rows: Vec<SweepRow>,
    pub r: Option<f64>,
    /// Why `R` (and the bound column) is missing, if it is.
    pub r_flag: Option<String>,
    pub fitted_ratio: Option<f64>,
    pub horizon: f64,
    /// Rescaling factor applied before the sweep (1 when none).
    pub scale: f64,
}

pub const CSV_HEADER: [&str; 7] = ["sweep_var", "e1", "eta2", "eta3", "bound_eta1", "R", "fitted_ratio"];

impl ConvergenceRun {
    pub fn e1(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.e1).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            w.write_record([
                row.sweep_var.to_string(),
                row.e1.to_string(),
                opt(row.eta2),
                opt(row.eta3),
                opt(row.bound_eta1),
                opt(self.r),
                opt(self.fitted_ratio),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

/// `exp(slope)` of a least-squares line through `(k, ln e_k)`, skipping points
/// at or below [`FIT_FLOOR`].
pub fn fit_geometric_ratio(xs: &[usize], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(errors)
        .filter(|(_, &e)| e > FIT_FLOOR)
        .map(|(&x, &e)| (x as f64, e.ln()))
        .collect();
    (pts.len() >= 2).then(|| least_squares_slope(&pts).exp())
}

/// `‖φ_0‖ R^N (1 − e^{Re(λ_1) t})^N`.
pub fn bound_curve(sys: &NonlinearSystem, level: usize, t: f64) -> Result<f64> {
    let r = parameter_r(sys)?;
    Ok(r.phi0_norm * r.value.powi(level as i32) * (1.0 - (r.lambda1_re * t).exp()).powi(level as i32))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EtaBound {
    pub value: f64,
    /// `R < 1`.
    pub contractive: bool,
}

/// `‖φ_0‖^j R^{N+1−j}` for `1 < j ≤ N`.
pub fn eta_bound(sys: &NonlinearSystem, level: usize, j: usize) -> Result<EtaBound> {
    if j <= 1 || j > level {
        return Err(Error::InvalidArgument(format!("η bound needs 1 < j ≤ N, got j = {j}, N = {level}")));
    }
    let r = parameter_r(sys)?;
    Ok(EtaBound {
        value: r.phi0_norm.powi(j as i32) * r.value.powi((level + 1 - j) as i32),
        contractive: r.value < 1.0,
    })
}

/// Error of the level-1 Carleman state against the nonlinear solution for
/// `N = 1..=n_max`, with `η_j` for `j ≤ min(3, N)`. Systems with `‖φ_0‖ ≥ 1`
/// are first rescaled by `M = 2‖φ_0‖`; errors are reported in original units.
pub fn level_sweep(sys: &NonlinearSystem, n_max: usize, t: f64, opts: &SweepOptions) -> Result<ConvergenceRun> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("level sweep needs N_max ≥ 1".into()));
    }
    let norm = sys.phi0().norm();
    let (work, scale) = match opts.scale {
        Some(m) => (rescale(sys, m)?, m),
        None if norm >= 1.0 => (rescale(sys, 2.0 * norm)?, 2.0 * norm),
        None => (sys.clone(), 1.0),
    };
    let u = match &opts.reference {
        Some(u) => {
            if u.len() != sys.base_dim() {
                return Err(Error::DimensionMismatch { context: "reference state", expected: sys.base_dim(), found: u.len() });
            }
            u.unscale(scale)
        }
        None => integrate(&work, &[t], opts.oracle_step)?.last().clone(),
    };
    let powers: Vec<Vec<C64>> = (1..=3.min(n_max)).map(|j| tensor_power(u.as_slice(), j)).collect();

    let (r, r_flag) = match parameter_r(&work) {
        Ok(p) => (Some(p.value), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let rows = (1..=n_max)
        .into_par_iter()
        .map(|n| {
            let cs = assemble(&work, n)?;
            let res = evolve(&cs, &cs.initial_state()?, &[t], opts.method)?;
            let state = &res.states[0];
            let eta = |j: usize| -> Result<f64> {
                let level = state.level(j)?;
                let diff: f64 = level.iter().zip(&powers[j - 1]).map(|(a, b)| (a - b).norm_sqr()).sum();
                Ok(diff.sqrt() * scale.powi(j as i32))
            };
            let bound = if r.is_some() { Some(bound_curve(&work, n, t)? * scale) } else { None };
            Ok(SweepRow {
                sweep_var: n,
                e1: eta(1)?,
                eta2: if n >= 2 { Some(eta(2)?) } else { None },
                eta3: if n >= 3 { Some(eta(3)?) } else { None },
                bound_eta1: bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let xs: Vec<usize> = rows.iter().map(|r| r.sweep_var).collect();
    let fitted_ratio = fit_geometric_ratio(&xs, &rows.iter().map(|r| r.e1).collect::<Vec<_>>());
    Ok(ConvergenceRun { sweep_name: "N".into(), rows, r, r_flag, fitted_ratio, horizon: t, scale })
}

/// One member of a nested discretization family.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyMember {
    /// Discretization index reported in the sweep (e.g. the mode cutoff).
    pub label: usize,
    pub system: NonlinearSystem,
    /// Ambient index of each member basis vector.
    pub embedding: Vec<usize>,
    /// Member basis indices spanning the input subspace `V_k` on which the
    /// next member must agree with this one.
    pub support: Vec<usize>,
}

/// Family whose members agree on nested input subspaces: `A_{k+1}|_{V_k} = A_k`.
#[derive(Clone, Debug)]
pub struct NestedFamily {
    members: Vec<FamilyMember>,
    ambient_dim: usize,
}

impl NestedFamily {
    /// Validates embeddings, nesting (deviation ≤ 1e-12) and the dissipativity
    /// certificates `W_S ⪯ 0`, `Λ_1 ⪯ 0` of every member.
    pub fn new(members: Vec<FamilyMember>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidArgument("family is empty".into()));
        }
        let ambient_dim = members.iter().flat_map(|m| m.embedding.iter().map(|i| i + 1)).max().unwrap_or(0);
        for m in &members {
            let d = m.system.base_dim();
            if m.embedding.len() != d {
                return Err(Error::DimensionMismatch { context: "member embedding", expected: d, found: m.embedding.len() });
            }
            let mut seen = m.embedding.clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != d {
                return Err(Error::InvalidArgument("member embedding is not injective".into()));
            }
            if m.support.iter().any(|&i| i >= d) {
                return Err(Error::InvalidArgument("support index outside member basis".into()));
            }
            if m.system.degree() > 2 {
                return Err(Error::Unsupported("nested families cover quadratic systems".into()));
            }
        }
        for (k, pair) in members.windows(2).enumerate() {
            let dev = nesting_deviation(&pair[0], &pair[1])?;
            if dev > 1e-12 {
                return Err(Error::NestingViolation { member: k + 1, deviation: dev });
            }
        }
        for m in &members {
            let w1 = m.system.w1();
            let ws = check_ws(w1)?;
            let l1 = check_lambda1(w1, &m.system.w2())?;
            let tol = DEFAULT_TOL * inf_norm(w1).max(1.0);
            if ws > tol || l1 > tol {
                return Err(Error::NotDissipative(format!(
                    "member {}: λ_max(W_S) = {ws:e}, λ_max(Λ_1) = {l1:e}",
                    m.label
                )));
            }
        }
        Ok(Self { members, ambient_dim })
    }

    pub fn members(&self) -> &[FamilyMember] {
        &self.members
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    /// Zero-padded image of a member vector in the ambient basis.
    pub fn embed(&self, member: usize, v: &CVector) -> CVector {
        let mut out = CVector::zeros(self.ambient_dim);
        for (i, &a) in self.members[member].embedding.iter().enumerate() {
            out[a] = v[i];
        }
        out
    }
}

/// Largest entry deviation between `small` and `big` on the input subspace of
/// `small`, both mapped to the ambient basis.
pub fn nesting_deviation(small: &FamilyMember, big: &FamilyMember) -> Result<f64> {
    let locate = |ambient: usize| big.embedding.iter().position(|&a| a == ambient);
    let ds = small.system.base_dim();
    let db = big.system.base_dim();
    let mut row_map = vec![None; ds];
    for (i, &a) in small.embedding.iter().enumerate() {
        row_map[i] = Some(locate(a).ok_or(Error::NestingViolation { member: 0, deviation: f64::INFINITY })?);
    }
    let mut dev: f64 = 0.0;
    // Column of `small` vs the matching column of `big`, compared over all
    // rows of `big` (rows outside `small` must vanish).
    let mut compare = |col_small: Vec<C64>, col_big: Vec<C64>| {
        let mut expected = vec![C64::new(0.0, 0.0); db];
        for (i, v) in col_small.into_iter().enumerate() {
            expected[row_map[i].expect("mapped")] = v;
        }
        for (a, b) in expected.iter().zip(&col_big) {
            dev = dev.max((a - b).norm());
        }
    };
    let (w1s, w1b) = (small.system.w1(), big.system.w1());
    for &j in &small.support {
        let jb = row_map[j].expect("mapped");
        compare(w1s.column(j).iter().copied().collect(), w1b.column(jb).iter().copied().collect());
    }
    let (w2s, w2b) = (small.system.w2(), big.system.w2());
    for &i in &small.support {
        for &j in &small.support {
            let (ib, jb) = (row_map[i].expect("mapped"), row_map[j].expect("mapped"));
            compare(
                w2s.column(i * ds + j).iter().copied().collect(),
                w2b.column(ib * db + jb).iter().copied().collect(),
            );
        }
    }
    Ok(dev)
}

/// Carleman level-`N` solutions of every member at time `t`, embedded in the
/// ambient basis; rows hold the successive differences `‖u_{k+1} − u_k‖`.
pub fn discretization_sweep(family: &NestedFamily, level: usize, t: f64, method: EvolutionMethod) -> Result<ConvergenceRun> {
    let solutions = family
        .members
        .par_iter()
        .enumerate()
        .map(|(k, m)| {
            let cs = assemble(&m.system, level)?;
            let res = evolve(&cs, &cs.initial_state()?, &[t], method)?;
            Ok(family.embed(k, res.states[0].level(1)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = solutions
        .windows(2)
        .zip(&family.members)
        .map(|(pair, m)| SweepRow { sweep_var: m.label, e1: (&pair[1] - &pair[0]).norm(), eta2: None, eta3: None, bound_eta1: None })
        .collect();
    Ok(ConvergenceRun {
        sweep_name: "n".into(),
        rows,
        r: None,
        r_flag: Some("no rate is asserted for discretization sweeps".into()),
        fitted_ratio: None,
        horizon: t,
        scale: 1.0,
    })
}

/// Run metadata written next to the CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub system_sha256: Option<String>,
    pub horizon: f64,
    pub sweep: String,
    pub grid: Vec<usize>,
    pub method: EvolutionMethod,
    pub oracle_step: f64,
    pub tolerance: f64,
    pub scale: f64,
    pub seed: u64,
    /// Notes such as a missing fit or `R`.
    pub flags: Vec<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::Digest;
    hex::encode(sha2::Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dissipativity::lambda1_critical_scale;
    use crate::linalg::{c, complex_gaussian, complex_gaussian_matrix, random_hermitian_nsd, CMatrix};
    use crate::oracle::logistic_closed_form;
    use crate::semigroup::expm;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn logistic(u0: f64) -> NonlinearSystem {
        NonlinearSystem::scalar(&[-1.0, 1.0], u0).unwrap()
    }

    fn exact_opts(u0: f64, t: f64) -> SweepOptions {
        let u = CVector::from_element(1, c(logistic_closed_form(u0, t).unwrap()));
        SweepOptions { reference: Some(u), ..Default::default() }
    }

    #[test]
    fn logistic_sweep_decays_below_r() {
        let run = level_sweep(&logistic(0.5), 10, 1.0, &exact_opts(0.5, 1.0)).unwrap();
        let e = run.e1();
        assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
        assert_eq!(run.r, Some(0.5));
        let ratio = run.fitted_ratio.unwrap();
        assert!((0.25..=0.5).contains(&ratio), "{ratio}");
        for row in &run.rows {
            assert!(row.e1 <= 1.05 * row.bound_eta1.unwrap(), "{row:?}");
        }
    }

    #[test]
    fn linear_and_zero_sweeps() {
        let lin = NonlinearSystem::scalar(&[-1.0, 0.0], 0.5).unwrap();
        let run = level_sweep(&lin, 4, 1.0, &SweepOptions::default()).unwrap();
        assert!(run.e1().iter().all(|&e| e <= 1e-10), "{:?}", run.e1());
        let zero = level_sweep(&logistic(0.0), 4, 1.0, &SweepOptions::default()).unwrap();
        assert!(zero.rows.iter().all(|r| r.e1 == 0.0 && r.eta2.unwrap_or(0.0) == 0.0));
    }

    #[test]
    fn bound_curve_examples() {
        assert!((bound_curve(&logistic(0.5), 5, 1.0).unwrap() - 0.001576956098044708).abs() < 1e-15);
        assert_eq!(bound_curve(&logistic(0.5), 5, 0.0).unwrap(), 0.0);
        assert_eq!(bound_curve(&logistic(0.0), 3, 1.0).unwrap(), 0.0);
        assert!(bound_curve(&NonlinearSystem::scalar(&[0.5, 1.0], 0.5).unwrap(), 2, 1.0).is_err());
    }

    #[test]
    fn eta_bound_examples() {
        let b = eta_bound(&logistic(0.5), 6, 2).unwrap();
        assert!((b.value - 7.8125e-3).abs() < 1e-16);
        let n = eta_bound(&logistic(0.5), 4, 4).unwrap();
        assert!((n.value - 0.5f64.powi(4) * 0.5).abs() < 1e-16);
        let big = eta_bound(&NonlinearSystem::scalar(&[-1.0, 4.0], 0.5).unwrap(), 3, 2).unwrap();
        assert!(!big.contractive && big.value > 0.0);
        assert!(eta_bound(&logistic(0.5), 3, 1).is_err());
        assert!(eta_bound(&logistic(0.5), 3, 4).is_err());
    }

    #[test]
    fn auto_rescale_reports_original_units() {
        let sys = NonlinearSystem::scalar(&[-1.0, 0.1], 1.5).unwrap();
        let run = level_sweep(&sys, 5, 1.0, &SweepOptions::default()).unwrap();
        assert_eq!(run.scale, 3.0);
        assert!(run.e1().windows(2).all(|w| w[1] <= w[0]));
        let direct = integrate(&sys, &[1.0], 1e-3).unwrap().last()[0];
        let cs = assemble(&rescale(&sys, 3.0).unwrap(), 5).unwrap();
        let level1 = evolve(&cs, &cs.initial_state().unwrap(), &[1.0], EvolutionMethod::Expm).unwrap().level1()[0][0];
        assert!((run.rows[4].e1 - (level1 * 3.0 - direct).norm()).abs() < 1e-12);
    }

    #[test]
    fn certified_sweeps_are_non_increasing() {
        for seed in 0..4 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w1 = random_hermitian_nsd(&mut rng, 2, 1.0, -0.5);
            let w2 = complex_gaussian_matrix(&mut rng, 2, 4);
            let w2 = &w2 * c(0.9 * lambda1_critical_scale(&w1, &w2).unwrap());
            let phi0 = complex_gaussian(&mut rng, 2);
            let phi0 = phi0.unscale(phi0.norm() / 0.4);
            let sys = NonlinearSystem::quadratic(w1, w2, phi0).unwrap();
            let run = level_sweep(&sys, 5, 1.0, &SweepOptions { oracle_step: 1e-3, ..Default::default() }).unwrap();
            let e = run.e1();
            assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-12), "seed {seed}: {e:?}");
        }
    }

    #[test]
    fn csv_layout() {
        let run = level_sweep(&logistic(0.5), 3, 1.0, &exact_opts(0.5, 1.0)).unwrap();
        let csv = run.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "sweep_var,e1,eta2,eta3,bound_eta1,R,fitted_ratio");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 7);
        assert_eq!(first[0], "1");
        assert!(first[2].is_empty() && first[3].is_empty());
        assert_eq!(first[5], "0.5");
        assert_eq!(csv, run.to_csv());
    }

    #[test]
    fn fit_ignores_floor() {
        let r = fit_geometric_ratio(&[1, 2, 3, 4], &[1e-2, 1e-3, 1e-4, 1e-16]).unwrap();
        assert!((r - 0.1).abs() < 1e-12);
        assert!(fit_geometric_ratio(&[1], &[1.0]).is_none());
    }

    fn diagonal_member(label: usize, diag: &[f64], phi0: &[f64]) -> FamilyMember {
        let d = diag.len();
        let w1 = CMatrix::from_diagonal(&CVector::from_iterator(d, diag.iter().map(|&x| c(x))));
        let sys = NonlinearSystem::quadratic(w1, CMatrix::zeros(d, d * d), CVector::from_iterator(d, phi0.iter().map(|&x| c(x)))).unwrap();
        FamilyMember { label, system: sys, embedding: (0..d).collect(), support: (0..d).collect() }
    }

    #[test]
    fn identical_members_have_zero_differences() {
        let m = diagonal_member(1, &[-1.0, -2.0], &[0.3, 0.1]);
        let fam = NestedFamily::new(vec![m.clone(), m.clone(), m]).unwrap();
        let run = discretization_sweep(&fam, 2, 1.0, EvolutionMethod::Expm).unwrap();
        assert!(run.rows.iter().all(|r| r.e1 == 0.0));
        assert!(run.fitted_ratio.is_none());
    }

    #[test]
    fn linear_family_tracks_spectral_truncation() {
        let diag = [-1.0, -2.0, -3.0, -4.0];
        let phi = [0.4, 0.2, 0.1, 0.05];
        let members: Vec<_> = (2..=4).map(|k| diagonal_member(k, &diag[..k], &phi[..k])).collect();
        let fam = NestedFamily::new(members).unwrap();
        let run = discretization_sweep(&fam, 2, 0.5, EvolutionMethod::Expm).unwrap();
        for (row, k) in run.rows.iter().zip(2..) {
            let expected = phi[k] * (diag[k] * 0.5f64).exp();
            assert!((row.e1 - expected).abs() < 1e-14, "{row:?}");
        }
        // The dense linear solve of the largest member agrees with its embedded state.
        let w1 = fam.members()[2].system.w1().clone();
        let dense = expm(&w1, 0.5).unwrap() * fam.members()[2].system.phi0();
        assert!((dense[3].re - phi[3] * (-2.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn nesting_violation_rejected() {
        let a = diagonal_member(1, &[-1.0, -2.0], &[0.1, 0.1]);
        let b = diagonal_member(2, &[-1.0, -2.5, -3.0], &[0.1, 0.1, 0.0]);
        assert!(matches!(NestedFamily::new(vec![a, b]), Err(Error::NestingViolation { member: 1, .. })));
    }

    #[test]
    fn manifest_hash_is_stable() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        let m = RunManifest {
            system_sha256: None,
            horizon: 1.0,
            sweep: "N".into(),
            grid: vec![1, 2],
            method: EvolutionMethod::Expm,
            oracle_step: 1e-3,
            tolerance: 1e-10,
            scale: 1.0,
            seed: 0,
            flags: Vec::new(),
        };
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["method"]["method"], "expm");
    }
}
