//! The single-experiment subcommands.

use smalldev_core::chenli::{chenli_sweep, write_results_csv, ChenLiOptions, ChenLiQuery};
use smalldev_core::grid::write_paths_csv;
use smalldev_core::norms::NormSpec;
use smalldev_core::quantize::{decay_exponent, quant_curve};
use smalldev_core::sampling::sample_paths;
use smalldev_core::smallball::{
    converse_transfer, mc_smallball_with, rate_fit_with, spectral_curve, transfer_bound, McOptions, Method,
    RateFitOptions, RateLaw, SmallBallCurve,
};
use smalldev_core::spectral::{eigen_rate_fit, kl_spectrum, EigenSpectrum};
use smalldev_core::{Grid, ProcessSpec};

use crate::artifacts::Artifacts;
use crate::config::{need, Experiment, ExperimentConfig};
use crate::error::{config_err, RunError, RunResult};
use crate::verify;

const DEFAULT_PATHS: usize = 16;
const DEFAULT_SIM_GRID: usize = 256;
const DEFAULT_SPECTRAL_GRID: usize = 1024;
const DEFAULT_MODES: usize = 64;
const DEFAULT_QUANT_MC: usize = 20_000;

pub fn run(cfg: &ExperimentConfig, out: &mut Artifacts) -> RunResult<()> {
    match cfg.kind() {
        Experiment::Simulate => simulate(cfg, out),
        Experiment::Smallball => smallball(cfg, out).map(|_| ()),
        Experiment::Ratefit => ratefit(cfg, out),
        Experiment::Transfer => transfer(cfg, out),
        Experiment::Chenli => chenli(cfg, out),
        Experiment::Eigen => eigen(cfg, out),
        Experiment::Quantize => quantize(cfg, out),
        Experiment::VerifyAll => verify::run_all(cfg, out),
    }
}

fn process(cfg: &ExperimentConfig) -> RunResult<&ProcessSpec> {
    let p = need(&cfg.process, "process", cfg.kind())?;
    p.validate()?;
    Ok(p)
}

fn norm(cfg: &ExperimentConfig) -> RunResult<NormSpec> {
    let n = cfg.norm.unwrap_or_else(NormSpec::sup);
    n.validate()?;
    Ok(n)
}

fn samples(cfg: &ExperimentConfig) -> RunResult<usize> {
    need(&cfg.n_samples, "n_samples", cfg.kind()).copied()
}

fn spectrum(cfg: &ExperimentConfig, spec: &ProcessSpec) -> RunResult<EigenSpectrum> {
    let n = cfg.grid_n.unwrap_or(DEFAULT_SPECTRAL_GRID);
    Ok(kl_spectrum(spec, n, cfg.modes.unwrap_or(DEFAULT_MODES))?)
}

fn simulate(cfg: &ExperimentConfig, out: &mut Artifacts) -> RunResult<()> {
    let spec = process(cfg)?;
    let grid = Grid::new(cfg.grid_n.unwrap_or(DEFAULT_SIM_GRID))?;
    let paths = sample_paths(spec, grid, cfg.n_samples.unwrap_or(DEFAULT_PATHS), cfg.seed())?;
    out.write("paths.csv", |w| write_paths_csv(w, &paths))?;
    Ok(())
}

fn curve(cfg: &ExperimentConfig) -> RunResult<SmallBallCurve> {
    let spec = process(cfg)?;
    let norm = norm(cfg)?;
    let eps = need(&cfg.eps, "eps", cfg.kind())?;
    match cfg.method.unwrap_or(Method::Mc) {
        Method::Mc => {
            let opts = McOptions { grid_n: cfg.grid_n, ..McOptions::default() };
            Ok(mc_smallball_with(spec, &norm, eps, samples(cfg)?, cfg.seed(), &opts)?)
        }
        Method::Spectral => {
            if norm != NormSpec::l2() {
                return config_err("the spectral method needs `norm` {\"kind\": \"lp\", \"p\": 2}");
            }
            Ok(spectral_curve(spec, &spectrum(cfg, spec)?, eps)?)
        }
    }
}

fn smallball(cfg: &ExperimentConfig, out: &mut Artifacts) -> RunResult<SmallBallCurve> {
    let c = curve(cfg)?;
    out.write("smallball.csv", |w| c.write_csv(w))?;
    Ok(c)
}

fn ratefit(cfg: &ExperimentConfig, out: &mut Artifacts) -> RunResult<()> {
    let c = smallball(cfg, out)?;
    let theta_fixed = if cfg.theta_free.unwrap_or(false) { None } else { Some(cfg.theta.unwrap_or(0.0)) };
    let fit = rate_fit_with(&c, &RateFitOptions { theta_fixed, ..RateFitOptions::default() })?;
    out.write_row(
        "ratefit.csv",
        &[
            ("kappa", fit.kappa.to_string()),
            ("inv_tau", fit.inv_tau.to_string()),
            ("theta", fit.theta.to_string()),
            ("offset", fit.offset.to_string()),
            ("r2", fit.r2.to_string()),
            ("points", fit.points.to_string()),
        ],
    )?;
    Ok(())
}

fn transfer(cfg: &ExperimentConfig, out: &mut Artifacts) -> RunResult<()> {
    let rate = need(&cfg.rate, "rate", cfg.kind())?;
    let m = *need(&cfg.order, "order", cfg.kind())?;
    let norm = norm(cfg)?;
    let (direction, t) = match rate {
        RateLaw::Direct { .. } => ("direct", transfer_bound(rate, m, &norm)?),
        RateLaw::Converse { .. } => ("converse", converse_transfer(rate, m, &norm)?),
    };
    let constant = t.constant.map(|c| c.to_string()).unwrap_or_default();
    out.write_row(
        "transfer.csv",
        &[
            ("direction", direction.into()),
            ("exponent", t.exponent.to_string()),
            ("log_exponent", t.log_exponent.to_string()),
            ("constant", constant),
        ],
    )?;
    Ok(())
}

fn chenli(cfg: &ExperimentConfig, out: &mut Artifacts) -> RunResult<()> {
    let comparison = cfg.comparison.clone().unwrap_or(ProcessSpec::BrownianMotion);
    let order = match (&cfg.order, &comparison) {
        (Some(m), _) => *m,
        (None, ProcessSpec::BrownianMotion) => 1.0,
        (None, ProcessSpec::RiemannLiouville { hurst }) => hurst + 0.5,
        (None, _) => return config_err("missing required field `order` for experiment `chenli`"),
    };
    let eps = need(&cfg.eps, "eps", cfg.kind())?;
    let lambdas = need(&cfg.lambdas, "lambdas", cfg.kind())?;
    let q = ChenLiQuery {
        comparison,
        target: process(cfg)?.clone(),
        order,
        norm: norm(cfg)?,
        eps: eps[0],
        lambda: lambdas[0],
    };
    let opts = ChenLiOptions { derivative_scale: cfg.derivative_scale.unwrap_or(1.0) };
    let rows = chenli_sweep(&q, eps, lambdas, samples(cfg)?, cfg.seed(), &opts)?;
    out.write("chenli.csv", |w| write_results_csv(w, &rows))?;
    let failed: Vec<String> =
        rows.iter().filter(|r| !r.pass).map(|r| format!("(ε = {}, λ = {})", r.eps, r.lambda)).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(RunError::Verification(format!("lhs < rhs - 2·stderr at {}", failed.join(", "))))
    }
}

fn eigen(cfg: &ExperimentConfig, out: &mut Artifacts) -> RunResult<()> {
    let sp = spectrum(cfg, process(cfg)?)?;
    out.write("eigen.csv", |w| sp.write_csv(w))?;
    let [lo, hi] = cfg.fit_range.unwrap_or([5, 40.min(sp.len())]);
    let fit = eigen_rate_fit(&sp, lo, hi)?;
    out.write_row(
        "eigen_fit.csv",
        &[
            ("lo", lo.to_string()),
            ("hi", hi.to_string()),
            ("slope", fit.slope.to_string()),
            ("shift", fit.shift.to_string()),
            ("scale", fit.scale.to_string()),
        ],
    )?;
    Ok(())
}

fn quantize(cfg: &ExperimentConfig, out: &mut Artifacts) -> RunResult<()> {
    let sp = spectrum(cfg, process(cfg)?)?;
    let budgets = need(&cfg.budgets, "budgets", cfg.kind())?;
    let n_mc = cfg.n_samples.unwrap_or(DEFAULT_QUANT_MC);
    let curve = quant_curve(&sp, budgets, n_mc, cfg.seed())?;
    out.write("quantize.csv", |w| curve.write_csv(w))?;
    let positive: Vec<f64> = budgets.iter().copied().filter(|&r| r > 0.0).collect();
    if positive.len() >= 3 {
        let lo = positive.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = positive.iter().copied().fold(0.0, f64::max);
        let a = decay_exponent(&curve, lo, hi)?;
        out.write_row(
            "quantize_fit.csv",
            &[("r_lo", lo.to_string()), ("r_hi", hi.to_string()), ("decay_exponent", a.to_string())],
        )?;
    }
    Ok(())
}
