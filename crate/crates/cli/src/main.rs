use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use smalldev_cli::artifacts::Artifacts;
use smalldev_cli::experiments;
use smalldev_cli::verify::DEFAULT_SEED;
use smalldev_cli::{Experiment, ExperimentConfig, Overrides, RunError, RunResult};

/// Small deviation experiments: simulation, estimation, transfer algebra and checks.
#[derive(Parser)]
#[command(name = "smalldev", version = smalldev_cli::artifacts::GIT_DESCRIBE)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample paths of a process.
    Simulate(RunArgs),
    /// Small ball curve by Monte Carlo or the spectral route.
    Smallball(RunArgs),
    /// Small ball curve plus a fitted rate law.
    Ratefit(RunArgs),
    /// Exponents transferred through fractional integration.
    Transfer(RunArgs),
    /// Both sides of the Gaussian comparison inequality; exit 3 if it fails.
    Chenli(RunArgs),
    /// Covariance eigenvalues and their decay.
    Eigen(RunArgs),
    /// Product quantizer distortion against rate.
    Quantize(RunArgs),
    /// Every acceptance check with fixed seeds; the config file is optional.
    VerifyAll(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n_samples: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("smalldev: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> RunResult<()> {
    let start = Instant::now();
    set_threads()?;
    let (kind, args) = match command {
        Command::Simulate(a) => (Experiment::Simulate, a),
        Command::Smallball(a) => (Experiment::Smallball, a),
        Command::Ratefit(a) => (Experiment::Ratefit, a),
        Command::Transfer(a) => (Experiment::Transfer, a),
        Command::Chenli(a) => (Experiment::Chenli, a),
        Command::Eigen(a) => (Experiment::Eigen, a),
        Command::Quantize(a) => (Experiment::Quantize, a),
        Command::VerifyAll(a) => (Experiment::VerifyAll, a),
    };
    let cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if kind == Experiment::VerifyAll => {
            ExperimentConfig { seed: Some(DEFAULT_SEED), ..ExperimentConfig::empty(kind) }
        }
        None => return Err(RunError::Config(format!("`{kind}` needs --config"))),
    };
    let overrides = Overrides { seed: args.seed, out: args.out, n_samples: args.n_samples };
    let cfg = cfg.resolve(kind, &overrides)?;
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("smalldev-out").join(kind.to_string()));
    let mut out = Artifacts::create(&dir, &cfg)?;
    let result = experiments::run(&cfg, &mut out);
    let code = result.as_ref().err().map_or(0, RunError::exit_code);
    out.finish(&cfg, start.elapsed().as_secs_f64(), code)?;
    if result.is_ok() {
        eprintln!("smalldev: wrote {} artifact(s) to {}", out.written().len(), out.dir().display());
    }
    result
}

/// Caps the worker pool at `SMALLBALL_THREADS` when it is set.
fn set_threads() -> RunResult<()> {
    let Ok(v) = std::env::var("SMALLBALL_THREADS") else { return Ok(()) };
    let n: usize = match v.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return Err(RunError::Config(format!("SMALLBALL_THREADS must be a positive integer, got {v:?}"))),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| RunError::Config(format!("cannot size the worker pool: {e}")))
}
