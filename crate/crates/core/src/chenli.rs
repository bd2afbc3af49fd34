//! The Gaussian comparison inequality
//! `P(‖Y‖ ≤ ε) ≥ P(‖X‖ ≤ λε) · E exp(-λ²/2 ‖Y^{(M)}‖²_{L2})` and the choice of `λ`.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::Grid;
use crate::norms::NormSpec;
use crate::process::ProcessSpec;
use crate::smallball::{
    bm_sup_probability, debruijn_constant, infimum_constant, mc_smallball, mc_smallball_with, rate_fit, McOptions,
    RateLaw,
};
use crate::spectral::{derivative_kernel, kl_spectrum, l2_smallball, log_laplace, EigenSpectrum};

/// Grid and retained modes for numerically derived spectra.
const SPECTRUM_N: usize = 1024;
const SPECTRUM_K: usize = 64;
const DERIVATIVE_N: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChenLiQuery {
    /// Brownian motion or `R^H`, whose reproducing kernel space is `I^M L2`.
    pub comparison: ProcessSpec,
    pub target: ProcessSpec,
    pub order: f64,
    pub norm: NormSpec,
    pub eps: f64,
    pub lambda: f64,
}

fn comparison_hurst(spec: &ProcessSpec) -> Result<f64> {
    match spec {
        ProcessSpec::BrownianMotion => Ok(0.5),
        ProcessSpec::RiemannLiouville { hurst } => Ok(*hurst),
        other => domain(format!("comparison process must be Brownian or Riemann-Liouville, got {other:?}")),
    }
}

impl ChenLiQuery {
    pub fn validate(&self) -> Result<()> {
        let h = comparison_hurst(&self.comparison)?;
        self.comparison.validate()?;
        self.target.validate()?;
        self.norm.validate()?;
        if (h - (self.order - 0.5)).abs() > 1e-12 {
            return domain(format!("order {} does not match H = {h} (need H = M - 1/2)", self.order));
        }
        if !(self.eps > 0.0 && self.lambda > 0.0) {
            return domain("ε and λ must be positive");
        }
        Ok(())
    }
}

/// Knobs for [`chenli_bound_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChenLiOptions {
    /// Multiplies the target's derivative. Values other than 1 deliberately break the
    /// inequality's hypothesis and exist to exercise the failure path.
    pub derivative_scale: f64,
}

impl Default for ChenLiOptions {
    fn default() -> Self {
        Self { derivative_scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChenLiResult {
    pub lambda: f64,
    pub eps: f64,
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// `P(‖X‖ ≤ λε)`.
    pub small_ball: f64,
    /// `E exp(-λ²/2 ‖Y^{(M)}‖²)`.
    pub laplace: f64,
    pub rhs: f64,
    /// `(lhs - rhs) / stderr(lhs)`.
    pub margin: f64,
    pub pass: bool,
    /// True when the right side vanished, so the inequality holds for free.
    pub trivial: bool,
}

pub fn write_results_csv<W: Write>(out: &mut W, rows: &[ChenLiResult]) -> io::Result<()> {
    writeln!(out, "lambda,eps,lhs,rhs,margin_stderr")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.lambda, r.eps, r.lhs, r.rhs, r.margin)?;
    }
    Ok(())
}

/// Spectrum of `Y^{(M)}`, or `None` when the derivative is not square integrable
/// (its norm is then infinite and the Laplace factor vanishes).
pub fn derivative_spectrum(target: &ProcessSpec, order: f64) -> Result<Option<EigenSpectrum>> {
    match target {
        ProcessSpec::Integrated { base, m } if *m as f64 == order => {
            // the m-fold integral differentiates back to the base
            if base.is_stable() {
                return Err(Error::Unsupported("stable processes have no Gaussian spectrum".into()));
            }
            Ok(Some(kl_spectrum(base, SPECTRUM_N, SPECTRUM_K)?))
        }
        ProcessSpec::FracIntegrated { base, order: o } if *o == order => {
            Ok(Some(kl_spectrum(base, SPECTRUM_N, SPECTRUM_K)?))
        }
        _ if order == 1.0 => match derivative_kernel(target, Grid::new(DERIVATIVE_N)?) {
            Ok(k) => Ok(Some(k.spectrum(SPECTRUM_K)?.with_fitted_tail()?)),
            Err(Error::Unsupported(_)) => Ok(None),
            Err(e) => Err(e),
        },
        _ => Err(Error::Unsupported(format!("no derivative spectrum of order {order} for {target:?}"))),
    }
}

/// `P(‖X‖ ≤ r)` for the comparison process.
fn comparison_probability(q: &ChenLiQuery, radius: f64, n_samples: usize, seed: u64) -> Result<f64> {
    let h = comparison_hurst(&q.comparison)?;
    if h == 0.5 && q.norm.is_sup() {
        return Ok(bm_sup_probability(radius));
    }
    if q.norm == NormSpec::l2() {
        let sp = kl_spectrum(&q.comparison, SPECTRUM_N, SPECTRUM_K)?;
        return Ok((-l2_smallball(&sp, radius)?).exp());
    }
    match mc_smallball(&q.comparison, &q.norm, &[radius], n_samples, seed) {
        Ok(c) => Ok(c.p_hat(0)),
        Err(Error::EmptyCurve) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Evaluates both sides for one `(ε, λ)` pair.
pub fn chenli_bound(q: &ChenLiQuery, n_samples: usize, seed: u64) -> Result<ChenLiResult> {
    Ok(chenli_sweep(q, &[q.eps], &[q.lambda], n_samples, seed, &ChenLiOptions::default())?.remove(0))
}

/// Both sides over every `(ε, λ)` pair, with one MC batch for the left side and one
/// derivative spectrum. Rows are ordered by `ε` (as given), then `λ`.
pub fn chenli_sweep(
    q: &ChenLiQuery,
    eps: &[f64],
    lambdas: &[f64],
    n_samples: usize,
    seed: u64,
    opts: &ChenLiOptions,
) -> Result<Vec<ChenLiResult>> {
    q.validate()?;
    if eps.is_empty() || lambdas.is_empty() {
        return domain("ε and λ lists must be nonempty");
    }
    if eps.iter().chain(lambdas).any(|v| !(*v > 0.0)) {
        return domain("ε and λ must be positive");
    }
    let curve = lhs_estimates(q, eps, n_samples, seed)?;
    let spectrum = derivative_spectrum(&q.target, q.order)?;
    let s2 = opts.derivative_scale * opts.derivative_scale;
    let spectrum = spectrum.map(|mut sp| {
        sp.lambdas.iter_mut().for_each(|l| *l *= s2);
        if let Some(t) = sp.tail.as_mut() {
            t.scale *= s2;
        }
        sp
    });
    let mut rows = Vec::with_capacity(eps.len() * lambdas.len());
    for &e in eps {
        let (lhs, se) = curve(e);
        for &l in lambdas {
            let laplace = match &spectrum {
                Some(sp) if s2 > 0.0 => (-log_laplace(sp, l)).exp(),
                Some(_) => 1.0,
                None => 0.0,
            };
            let small_ball = if laplace > 0.0 { comparison_probability(q, l * e, n_samples, seed + 1)? } else { 0.0 };
            let rhs = small_ball * laplace;
            let margin = if se > 0.0 {
                (lhs - rhs) / se
            } else if lhs >= rhs {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
            rows.push(ChenLiResult {
                lambda: l,
                eps: e,
                lhs,
                lhs_stderr: se,
                small_ball,
                laplace,
                rhs,
                margin,
                pass: lhs >= rhs - 2.0 * se,
                trivial: rhs == 0.0,
            });
        }
    }
    Ok(rows)
}

/// MC estimate of `P(‖Y‖ ≤ ε)` with its binomial standard error, for each radius.
fn lhs_estimates(q: &ChenLiQuery, eps: &[f64], n_samples: usize, seed: u64) -> Result<impl Fn(f64) -> (f64, f64)> {
    let curve = match mc_smallball_with(&q.target, &q.norm, eps, n_samples, seed, &McOptions::default()) {
        Ok(c) => Some(c),
        Err(Error::EmptyCurve) => None,
        Err(e) => return Err(e),
    };
    let nf = n_samples as f64;
    Ok(move |e: f64| {
        let Some(c) = &curve else { return (0.0, 0.0) };
        let entry = c.entries.iter().find(|x| x.eps == e).expect("radius was estimated");
        let p = entry.hits as f64 / nf;
        (p, (p * (1.0 - p) / nf).sqrt())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    pub d_star: f64,
    pub lambda_star: f64,
    /// `-log` of the modelled right side at `λ*`.
    pub neg_log_rhs: f64,
    /// The infimum `inf_D (κ_norm D^{-γ} + K D^{1/(τ+1/2)})`.
    pub constant: f64,
}

/// Modelled `-log rhs(λ) = κ_norm (λε)^{-γ} + K λ^{1/(τ+1/2)} |log λ|^{θτ/(τ+1/2)}`.
pub fn model_neg_log_rhs(rate: &RateLaw, kappa_norm: f64, gamma: f64, eps: f64, lambda: f64, k: f64) -> f64 {
    let RateLaw::Direct { tau, theta, .. } = *rate else { return f64::NAN };
    let e = 1.0 / (tau + 0.5);
    let q = theta * tau / (tau + 0.5);
    let log_factor = if q == 0.0 { 1.0 } else { lambda.ln().abs().powf(q) };
    kappa_norm * (lambda * eps).powf(-gamma) + k * lambda.powf(e) * log_factor
}

/// `λ(ε) = D* ε^{-(τ+1/2)/(1/γ+τ+1/2)} |log ε|^{-τθ/(γ(1/γ+τ+1/2))}`, with `D*`
/// minimizing `κ_norm D^{-γ} + K D^{1/(τ+1/2)}`. `K` defaults to the de Bruijn
/// constant of `rate`.
pub fn optimize_lambda(rate: &RateLaw, kappa_norm: f64, gamma: f64, eps: f64, k: Option<f64>) -> Result<LambdaChoice> {
    let RateLaw::Direct { tau, theta, .. } = *rate else {
        return domain("λ choice needs a rate in (κ, τ, θ) form");
    };
    rate.validate()?;
    if tau.is_infinite() {
        return domain("λ choice needs a finite τ");
    }
    if !(kappa_norm > 0.0 && gamma > 0.0 && eps > 0.0 && eps < 1.0) {
        return domain("need κ_norm > 0, γ > 0 and ε ∈ (0, 1)");
    }
    let k = k.unwrap_or_else(|| debruijn_constant(rate));
    let (d_star, constant) = infimum_constant(kappa_norm, k, gamma, tau);
    let denom = 1.0 / gamma + tau + 0.5;
    let mut lambda_star = d_star * eps.powf(-(tau + 0.5) / denom);
    if theta != 0.0 {
        lambda_star *= eps.ln().abs().powf(-tau * theta / (gamma * denom));
    }
    Ok(LambdaChoice {
        d_star,
        lambda_star,
        neg_log_rhs: model_neg_log_rhs(rate, kappa_norm, gamma, eps, lambda_star, k),
        constant,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RemainderMode {
    /// Slopes must agree within `tol`.
    Same { tol: f64 },
    /// Slopes must differ by at least `min_gap`.
    Differ { min_gap: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderVerdict {
    pub slope_x: f64,
    pub slope_y: f64,
    pub pass: bool,
}

/// Fits both MC curves over the same radii and compares their exponents.
#[allow(clippy::too_many_arguments)]
pub fn remainder_term_check(
    y: &ProcessSpec,
    x: &ProcessSpec,
    norm: &NormSpec,
    eps: &[f64],
    n_samples: usize,
    seed: u64,
    opts: &McOptions,
    mode: RemainderMode,
) -> Result<RemainderVerdict> {
    let cy = mc_smallball_with(y, norm, eps, n_samples, seed, opts)?;
    let cx = mc_smallball_with(x, norm, eps, n_samples, seed, opts)?;
    let slope_y = rate_fit(&cy, Some(0.0))?.inv_tau;
    let slope_x = rate_fit(&cx, Some(0.0))?.inv_tau;
    let gap = (slope_x - slope_y).abs();
    let pass = match mode {
        RemainderMode::Same { tol } => gap <= tol,
        RemainderMode::Differ { min_gap } => gap >= min_gap,
    };
    Ok(RemainderVerdict { slope_x, slope_y, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smallball::KAPPA_SUP;

    #[test]
    fn order_linkage() {
        let q = ChenLiQuery {
            comparison: ProcessSpec::RiemannLiouville { hurst: 0.7 },
            target: ProcessSpec::integrated(ProcessSpec::BrownianMotion, 1),
            order: 1.0,
            norm: NormSpec::sup(),
            eps: 0.3,
            lambda: 1.0,
        };
        assert!(q.validate().is_err());
        let q = ChenLiQuery { order: 1.2, ..q };
        assert!(q.validate().is_ok());
    }

    #[test]
    fn first_order_condition() {
        let rate = RateLaw::Direct { kappa: KAPPA_SUP, tau: 0.5, theta: 0.0 };
        let k = 0.7;
        let c = optimize_lambda(&rate, KAPPA_SUP, 2.0, 0.1, Some(k)).unwrap();
        let want = (2.0 * KAPPA_SUP / k).powf(1.0 / 3.0);
        assert!((c.d_star / want - 1.0).abs() < 1e-8, "{} {want}", c.d_star);
    }

    #[test]
    fn model_is_locally_optimal() {
        let rate = RateLaw::Direct { kappa: 0.125, tau: 1.5, theta: 0.0 };
        let c = optimize_lambda(&rate, KAPPA_SUP, 2.0, 0.01, None).unwrap();
        let k = debruijn_constant(&rate);
        for f in [0.5, 2.0] {
            let other = model_neg_log_rhs(&rate, KAPPA_SUP, 2.0, 0.01, f * c.lambda_star, k);
            assert!(other >= c.neg_log_rhs);
        }
    }
}
