use std::path::PathBuf;
use std::process::ExitCode;

use carleman::io::Viscosity;
use carleman::runner::{run, Command, ConfigLayer, Format, RunConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "carleman", version, about = "Carleman linearization certificates, sweeps and case studies")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Dissipativity certificates for a system file.
    Certify(Flags),
    /// Level sweep: Carleman level-1 error against the nonlinear oracle.
    Converge(Flags),
    /// Hyperviscous Burgers case study: K_M, certificate, level sweep.
    Burgers(Flags),
    /// K_M partial sum and tail, optionally checked against a baseline.
    Km(Flags),
    /// Relative A-bound and perturbed resolvent bound.
    Bounds(Flags),
    /// Carleman and oracle trajectories on a uniform time grid.
    Simulate(Flags),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct Flags {
    /// TOML file with defaults for any of these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    system: Option<PathBuf>,
    #[arg(long)]
    level: Option<usize>,
    #[arg(long)]
    level_max: Option<usize>,
    #[arg(long)]
    time: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Hyperviscosity order M.
    #[arg(long)]
    order: Option<u32>,
    /// Fourier mode cutoff n.
    #[arg(long)]
    modes: Option<usize>,
    /// Viscosity, or "auto" for 1.1 × threshold.
    #[arg(long)]
    viscosity: Option<String>,
    #[arg(long)]
    cutoff_p: Option<u64>,
    #[arg(long)]
    cutoff_m: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    norm: Option<f64>,
    /// auto, expm, rk4 or etdrk4.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    oracle_step: Option<f64>,
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Comma-separated resolvent probes.
    #[arg(long, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    #[arg(long)]
    points: Option<usize>,
}

impl Flags {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            system: self.system.clone(),
            level: self.level,
            level_max: self.level_max,
            time: self.time,
            tol: self.tol,
            seed: self.seed,
            out: self.out.clone(),
            format: self.format.map(|f| match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            }),
            order: self.order,
            modes: self.modes,
            viscosity: self.viscosity.as_ref().map(|v| match v.parse::<f64>() {
                Ok(x) => Viscosity::Value(x),
                Err(_) => Viscosity::Keyword(v.clone()),
            }),
            cutoff_p: self.cutoff_p,
            cutoff_m: self.cutoff_m,
            samples: self.samples,
            rho: self.rho,
            norm: self.norm,
            method: self.method.clone(),
            step: self.step,
            oracle_step: self.oracle_step,
            baseline: self.baseline.clone(),
            lambdas: self.lambdas.clone(),
            points: self.points,
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("CARLEMAN_THREADS") else {
        return Ok(());
    };
    let n: usize = value.trim().parse().map_err(|_| format!("CARLEMAN_THREADS must be a positive integer, got {value:?}"))?;
    if n == 0 {
        return Err("CARLEMAN_THREADS must be at least 1".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn resolve(command: Command, flags: &Flags) -> Result<RunConfig, carleman::Error> {
    let file = match &flags.config {
        Some(path) => Some(ConfigLayer::from_toml(&std::fs::read_to_string(path)?)?),
        None => None,
    };
    RunConfig::resolve(command, flags.layer(), file)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let (command, flags) = match &cli.command {
        Cmd::Certify(f) => (Command::Certify, f),
        Cmd::Converge(f) => (Command::Converge, f),
        Cmd::Burgers(f) => (Command::Burgers, f),
        Cmd::Km(f) => (Command::Km, f),
        Cmd::Bounds(f) => (Command::Bounds, f),
        Cmd::Simulate(f) => (Command::Simulate, f),
    };
    let cfg = match resolve(command, flags) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = run(&cfg);
    for file in &outcome.files {
        println!("wrote {}", file.display());
    }
    if outcome.code == 0 {
        println!("{}", outcome.message);
    } else {
        eprintln!("{}: {}", if outcome.code == 2 { "error" } else { "fail" }, outcome.message);
    }
    ExitCode::from(outcome.code)
}
