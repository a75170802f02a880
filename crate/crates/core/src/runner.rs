//! Batch commands behind the `carleman` binary. Each command validates its
//! inputs, computes everything, and only then writes its output files
//! (temp file + rename), so a failed run leaves no partial files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::burgers::{build_discretization, certify_spectral, compute_km, geometric_real_field, pseudospectral_reference};
use crate::carleman::{assemble, rescale, NonlinearSystem};
use crate::convergence::{level_sweep, sha256_hex, ConvergenceRun, RunManifest, SweepOptions};
use crate::dissipativity::{certify, DEFAULT_SAMPLES, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::io::{km_baseline_json, load_system, parse_km_baseline, Cx, LoadedSystem, Viscosity};
use crate::oracle::integrate;
use crate::perturbation::{a_bound, perturbed_resolvent_bound, PerturbedResolventReport, RelativeBoundReport};
use crate::semigroup::{evolve, EvolutionMethod};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Certify,
    Converge,
    Burgers,
    Km,
    Bounds,
    Simulate,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// One layer of settings; CLI flags override the config file, which
/// overrides the defaults.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub system: Option<PathBuf>,
    pub level: Option<usize>,
    pub level_max: Option<usize>,
    pub time: Option<f64>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub order: Option<u32>,
    pub modes: Option<usize>,
    pub viscosity: Option<Viscosity>,
    pub cutoff_p: Option<u64>,
    pub cutoff_m: Option<u64>,
    pub samples: Option<usize>,
    pub rho: Option<f64>,
    pub norm: Option<f64>,
    pub method: Option<String>,
    pub step: Option<f64>,
    pub oracle_step: Option<f64>,
    pub baseline: Option<PathBuf>,
    pub lambdas: Option<Vec<f64>>,
    pub points: Option<usize>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr, $($field:ident),*) => {
        ConfigLayer { $($field: $hi.$field.or($lo.$field)),* }
    };
}

impl ConfigLayer {
    /// `self` wins wherever it is set.
    pub fn over(self, lower: ConfigLayer) -> ConfigLayer {
        overlay!(
            self, lower, system, level, level_max, time, tol, seed, out, format, order, modes, viscosity, cutoff_p, cutoff_m,
            samples, rho, norm, method, step, oracle_step, baseline, lambdas, points
        )
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub system: Option<PathBuf>,
    pub level: usize,
    pub level_max: usize,
    pub time: f64,
    pub tol: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub format: Format,
    pub order: u32,
    pub modes: usize,
    pub viscosity: Viscosity,
    pub cutoff_p: u64,
    pub cutoff_m: u64,
    pub samples: usize,
    pub rho: f64,
    pub norm: f64,
    pub method: EvolutionMethod,
    pub oracle_step: f64,
    pub baseline: Option<PathBuf>,
    pub lambdas: Vec<f64>,
    pub points: usize,
}

fn parse_method(name: Option<&str>, step: Option<f64>) -> Result<EvolutionMethod> {
    let step = step.unwrap_or(1e-3);
    match name.unwrap_or("auto") {
        "auto" => Ok(EvolutionMethod::Auto),
        "expm" => Ok(EvolutionMethod::Expm),
        "rk4" => Ok(EvolutionMethod::Rk4 { step }),
        "etdrk4" => Ok(EvolutionMethod::Etdrk4 { step }),
        other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
    }
}

impl RunConfig {
    /// Merge `cli` over `file` over the per-command defaults.
    pub fn resolve(command: Command, cli: ConfigLayer, file: Option<ConfigLayer>) -> Result<Self> {
        let l = cli.over(file.unwrap_or_default());
        let burgers = command == Command::Burgers;
        let cfg = RunConfig {
            command,
            system: l.system,
            level: l.level.unwrap_or(3),
            level_max: l.level_max.unwrap_or(if burgers { 3 } else { 10 }),
            time: l.time.unwrap_or(if burgers { 0.5 } else { 1.0 }),
            tol: l.tol.unwrap_or(DEFAULT_TOL),
            seed: l.seed.unwrap_or(0),
            out: l.out.unwrap_or_else(|| PathBuf::from("out")),
            format: l.format.unwrap_or_default(),
            order: l.order.unwrap_or(3),
            modes: l.modes.unwrap_or(4),
            viscosity: l.viscosity.unwrap_or_else(|| Viscosity::Keyword("auto".into())),
            cutoff_p: l.cutoff_p.unwrap_or(crate::burgers::DEFAULT_CUTOFF_P),
            cutoff_m: l.cutoff_m.unwrap_or(crate::burgers::DEFAULT_CUTOFF_M),
            samples: l.samples.unwrap_or(DEFAULT_SAMPLES),
            rho: l.rho.unwrap_or(0.5),
            norm: l.norm.unwrap_or(0.5),
            method: parse_method(l.method.as_deref(), l.step)?,
            oracle_step: l.oracle_step.unwrap_or(1e-3),
            baseline: l.baseline,
            lambdas: l.lambdas.unwrap_or_else(|| vec![0.5, 1.0, 2.0, 10.0]),
            points: l.points.unwrap_or(11),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{what} must be positive, got {v}")))
            }
        };
        positive(self.time, "time")?;
        positive(self.tol, "tol")?;
        positive(self.oracle_step, "oracle step")?;
        if self.level == 0 || self.level_max == 0 {
            return Err(Error::InvalidArgument("levels start at 1".into()));
        }
        if self.points < 2 {
            return Err(Error::InvalidArgument("simulate needs at least 2 points".into()));
        }
        let needs_system = matches!(self.command, Command::Certify | Command::Converge | Command::Bounds | Command::Simulate);
        match &self.system {
            Some(p) if !p.is_file() => Err(Error::InvalidArgument(format!("system file {} not found", p.display()))),
            None if needs_system => Err(Error::InvalidArgument("--system is required".into())),
            _ => Ok(()),
        }
    }
}

/// Exit status and the files written.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub code: u8,
    pub files: Vec<PathBuf>,
    pub message: String,
}

/// 2 for malformed input, 1 for everything else.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_)
        | Error::Io(_)
        | Error::DimensionMismatch { .. }
        | Error::NotSquare { .. }
        | Error::NonFinite(_)
        | Error::BaseDimMismatch { .. }
        | Error::InvalidArgument(_)
        | Error::EvenOrder(_)
        | Error::DivergentOrder(_)
        | Error::DimensionOverflow { .. }
        | Error::LevelOutOfRange { .. }
        | Error::ScaleTooSmall { .. } => 2,
        _ => 1,
    }
}

struct Output {
    dir: PathBuf,
    pending: Vec<(String, Vec<u8>)>,
}

impl Output {
    fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), pending: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.pending.push((name.to_string(), bytes.into()));
    }

    fn commit(self) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(&self.dir)?;
        self.pending.into_iter().map(|(name, bytes)| write_atomic(&self.dir.join(name), &bytes)).collect()
    }
}

/// Write through a temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<PathBuf> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(path.to_path_buf())
}

pub fn run(cfg: &RunConfig) -> Outcome {
    let result = match cfg.command {
        Command::Certify => cmd_certify(cfg),
        Command::Converge => cmd_converge(cfg),
        Command::Burgers => cmd_burgers(cfg),
        Command::Km => cmd_km(cfg),
        Command::Bounds => cmd_bounds(cfg),
        Command::Simulate => cmd_simulate(cfg),
    };
    result.unwrap_or_else(|e| Outcome { code: exit_code(&e), files: Vec::new(), message: e.to_string() })
}

fn load(cfg: &RunConfig) -> Result<(LoadedSystem, Vec<u8>)> {
    let path = cfg.system.as_ref().ok_or_else(|| Error::InvalidArgument("--system is required".into()))?;
    load_system(path)
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn finish(out: Output, ok: bool, message: String) -> Result<Outcome> {
    let files = out.commit()?;
    Ok(Outcome { code: if ok { 0 } else { 1 }, files, message })
}

pub fn cmd_certify(cfg: &RunConfig) -> Result<Outcome> {
    let (loaded, _) = load(cfg)?;
    let mut out = Output::new(&cfg.out);
    let (ok, summary) = match &loaded.burgers {
        Some(disc) => {
            let rep = certify_spectral(disc, cfg.samples, cfg.seed)?;
            out.add("certificate.json", json(&rep));
            (rep.all_pass(), format!("Lambda1 max eigenvalue {:e}", rep.lambda_max_lambda1))
        }
        None => {
            let rep = certify(&assemble(&loaded.system, cfg.level)?, cfg.tol)?;
            out.add("certificate.json", rep.to_json() + "\n");
            let failed: Vec<&str> = rep.records.iter().filter(|r| !r.verdict.passed()).map(|r| r.certificate.as_str()).collect();
            (rep.all_pass(), if failed.is_empty() { "all certificates pass".into() } else { format!("failed: {}", failed.join(", ")) })
        }
    };
    finish(out, ok, summary)
}

fn reference_for(loaded: &LoadedSystem, t: f64, oracle_step: f64) -> Result<Option<crate::linalg::CVector>> {
    match &loaded.burgers {
        Some(disc) => {
            let sol = pseudospectral_reference(disc, loaded.system.phi0(), &[t], disc.stable_step(oracle_step))?;
            Ok(Some(sol.last().clone()))
        }
        None => Ok(None),
    }
}

fn sweep_outputs(out: &mut Output, cfg: &RunConfig, run: &ConvergenceRun, stem: &str, system_bytes: Option<&[u8]>) {
    let mut flags = Vec::new();
    if run.fitted_ratio.is_none() {
        flags.push("insufficient points".to_string());
    }
    flags.extend(run.r_flag.clone());
    let manifest = RunManifest {
        system_sha256: system_bytes.map(sha256_hex),
        horizon: run.horizon,
        sweep: run.sweep_name.clone(),
        grid: run.rows.iter().map(|r| r.sweep_var).collect(),
        method: cfg.method,
        oracle_step: cfg.oracle_step,
        tolerance: cfg.tol,
        scale: run.scale,
        seed: cfg.seed,
        flags,
    };
    match cfg.format {
        Format::Csv => out.add(&format!("{stem}.csv"), run.to_csv()),
        Format::Json => out.add(&format!("{stem}.json"), json(run)),
    }
    out.add(&format!("{stem}_manifest.json"), manifest.to_json() + "\n");
}

pub fn cmd_converge(cfg: &RunConfig) -> Result<Outcome> {
    let (loaded, bytes) = load(cfg)?;
    let opts = SweepOptions {
        method: cfg.method,
        oracle_step: cfg.oracle_step,
        reference: reference_for(&loaded, cfg.time, cfg.oracle_step)?,
        scale: loaded.scale,
    };
    let run = level_sweep(&loaded.system, cfg.level_max, cfg.time, &opts)?;
    let mut out = Output::new(&cfg.out);
    sweep_outputs(&mut out, cfg, &run, "convergence", Some(&bytes));
    let last = run.rows.last().map(|r| r.e1).unwrap_or(f64::NAN);
    finish(out, true, format!("{} levels, e1(N_max) = {last:e}", run.rows.len()))
}

pub fn cmd_burgers(cfg: &RunConfig) -> Result<Outcome> {
    let km = compute_km(cfg.order, cfg.cutoff_p, cfg.cutoff_m)?;
    let nu = match &cfg.viscosity {
        Viscosity::Value(v) => *v,
        Viscosity::Keyword(k) if k == "auto" => 1.1 * km.total().sqrt(),
        Viscosity::Keyword(k) => return Err(Error::InvalidArgument(format!("viscosity must be a number or \"auto\", got {k:?}"))),
    };
    let disc = build_discretization(cfg.modes, cfg.order, nu)?;
    if !(cfg.rho > 0.0 && cfg.rho < 1.0) || !(cfg.norm.is_finite() && cfg.norm >= 0.0) {
        return Err(Error::InvalidArgument("need 0 < rho < 1 and norm ≥ 0".into()));
    }
    let rep = certify_spectral(&disc, cfg.samples, cfg.seed)?;
    let mut out = Output::new(&cfg.out);
    out.add("km_baseline.json", km_baseline_json(&km) + "\n");
    out.add("burgers_certificate.json", json(&rep));
    if !rep.all_pass() {
        let why = if rep.failures.is_empty() { format!("Lambda1 max eigenvalue {:e}", rep.lambda_max_lambda1) } else { rep.failures.join("; ") };
        return finish(out, false, format!("certificate failed at nu = {nu}: {why}"));
    }
    let mut phi0 = geometric_real_field(cfg.modes, cfg.rho, 1.0);
    let norm = phi0.norm();
    if norm > 0.0 {
        phi0 *= crate::linalg::c(cfg.norm / norm);
    }
    let sys = disc.to_system(phi0.clone())?;
    let reference = pseudospectral_reference(&disc, &phi0, &[cfg.time], disc.stable_step(cfg.oracle_step))?.last().clone();
    let opts = SweepOptions { method: cfg.method, oracle_step: cfg.oracle_step, reference: Some(reference), scale: None };
    let run = level_sweep(&sys, cfg.level_max, cfg.time, &opts)?;
    sweep_outputs(&mut out, cfg, &run, "burgers_convergence", None);
    let e1 = run.e1();
    let decreasing = e1.windows(2).all(|w| w[1] < w[0]);
    finish(out, true, format!("nu = {nu}, certificates pass, e1 = {e1:?}, strictly decreasing: {decreasing}"))
}

/// The `K_M` estimate is written as the amplitude-free baseline; when a
/// baseline is supplied the value must match to `tol` (relative).
pub fn cmd_km(cfg: &RunConfig) -> Result<Outcome> {
    let km = compute_km(cfg.order, cfg.cutoff_p, cfg.cutoff_m)?;
    let mut out = Output::new(&cfg.out);
    out.add("km_baseline.json", km_baseline_json(&km) + "\n");
    let (ok, message) = match &cfg.baseline {
        Some(path) => {
            let base = parse_km_baseline(&std::fs::read_to_string(path)?)?;
            if (base.order, base.cutoff_p, base.cutoff_m) != (km.order, km.cutoff_p, km.cutoff_m) {
                return Err(Error::InvalidArgument("baseline M or cutoffs differ from the requested run".into()));
            }
            let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
            let dv = rel(km.value, base.value);
            let dt = if base.tail == 0.0 { km.tail } else { rel(km.tail, base.tail) };
            (dv <= cfg.tol && dt <= cfg.tol, format!("K_{} = {}, baseline deviation {dv:e}", km.order, km.total()))
        }
        None => (true, format!("K_{} = {} (sum {}, tail {})", km.order, km.total(), km.value, km.tail)),
    };
    finish(out, ok, message)
}

#[derive(Serialize)]
struct BoundsReport {
    relative_bound: RelativeBoundReport,
    resolvent: PerturbedResolventReport,
}

pub fn cmd_bounds(cfg: &RunConfig) -> Result<Outcome> {
    let (loaded, _) = load(cfg)?;
    let relative_bound = a_bound(&loaded.system, cfg.level, cfg.samples.min(10_000), cfg.seed)?;
    let resolvent = perturbed_resolvent_bound(&loaded.system, cfg.level, &cfg.lambdas)?;
    let ok = relative_bound.holds() && resolvent.applicable && resolvent.verdict.passed();
    let message = format!("a = {}, empirical ratio = {}, applicable = {}", relative_bound.a, relative_bound.empirical_max_ratio, resolvent.applicable);
    let mut out = Output::new(&cfg.out);
    out.add("bounds.json", json(&BoundsReport { relative_bound, resolvent }));
    finish(out, ok, message)
}

#[derive(Serialize)]
struct Trajectory {
    t: f64,
    carleman: Vec<Cx>,
    oracle: Vec<Cx>,
}

/// Level-1 Carleman trajectory next to the nonlinear oracle on a uniform grid.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let (loaded, _) = load(cfg)?;
    let times: Vec<f64> = (0..cfg.points).map(|k| cfg.time * k as f64 / (cfg.points - 1) as f64).collect();
    let (work, scale): (NonlinearSystem, f64) = match loaded.scale {
        Some(m) => (rescale(&loaded.system, m)?, m),
        None => (loaded.system.clone(), 1.0),
    };
    let cs = assemble(&work, cfg.level)?;
    let carleman = evolve(&cs, &cs.initial_state()?, &times, cfg.method)?.level1();
    let oracle = match &loaded.burgers {
        Some(disc) => pseudospectral_reference(disc, loaded.system.phi0(), &times, disc.stable_step(cfg.oracle_step))?.states,
        None => integrate(&loaded.system, &times, cfg.oracle_step)?.states,
    };
    let rows: Vec<Trajectory> = times
        .iter()
        .zip(carleman.iter().zip(&oracle))
        .map(|(&t, (cv, ov))| Trajectory {
            t,
            carleman: cv.iter().map(|z| Cx::from(z * scale)).collect(),
            oracle: ov.iter().map(|&z| Cx::from(z)).collect(),
        })
        .collect();
    let mut out = Output::new(&cfg.out);
    match cfg.format {
        Format::Json => out.add("simulate.json", json(&rows)),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["t", "k", "carleman_re", "carleman_im", "oracle_re", "oracle_im"]).expect("in-memory write");
            for row in &rows {
                for (k, (a, b)) in row.carleman.iter().zip(&row.oracle).enumerate() {
                    let (a, b) = (a.value(), b.value());
                    w.write_record([row.t.to_string(), k.to_string(), a.re.to_string(), a.im.to_string(), b.re.to_string(), b.im.to_string()])
                        .expect("in-memory write");
                }
            }
            out.add("simulate.csv", w.into_inner().expect("flush"));
        }
    }
    let last = rows.last().map(|r| {
        r.carleman.iter().zip(&r.oracle).map(|(a, b)| (a.value() - b.value()).norm_sqr()).sum::<f64>().sqrt()
    });
    finish(out, true, format!("{} points, final level-1 error {:e}", rows.len(), last.unwrap_or(f64::NAN)))
}
