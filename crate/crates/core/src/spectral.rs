//! Covariance-operator spectra, the L2 Laplace transform and L2 small ball evaluation.

use std::f64::consts::PI;
use std::io::{self, Write};

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta, beta_reg};

use crate::error::{domain, Error, Result};
use crate::grid::Grid;
use crate::numeric::{bisect, golden_min, legendre01, mills_lower, weighted_line};
use crate::process::{CovMatrix, Covariance, ProcessSpec};

const CLIP: f64 = 1e-14;
/// Tail terms summed one by one before switching to the integral form.
const EXPLICIT_TAIL: usize = 4096;
/// The same for the inversion integrand, which is evaluated thousands of times.
const IMHOF_EXPLICIT_TAIL: usize = 512;

/// `λ_j ≈ scale · (j - shift)^{-exponent}` for 1-based indices beyond the retained ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTail {
    pub scale: f64,
    pub shift: f64,
    pub exponent: f64,
}

impl PowerTail {
    pub fn at(&self, j: usize) -> f64 {
        self.scale * (j as f64 - self.shift).powf(-self.exponent)
    }
}

/// Decreasing eigenvalues of a covariance operator, optionally with a fitted tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSpectrum {
    pub lambdas: Vec<f64>,
    /// Grid size (or node count) the values came from; 0 for synthetic spectra.
    pub grid_n: usize,
    pub tail: Option<PowerTail>,
}

impl EigenSpectrum {
    /// Sorts descending and clips values below `1e-14 · λ_1`.
    pub fn from_values(mut lambdas: Vec<f64>, grid_n: usize) -> Self {
        lambdas.sort_by(|a, b| b.total_cmp(a));
        let top = lambdas.first().copied().unwrap_or(0.0).max(0.0);
        lambdas.retain(|&l| l > CLIP * top);
        Self { lambdas, grid_n, tail: None }
    }

    pub fn with_tail(mut self, tail: PowerTail) -> Self {
        self.tail = Some(tail);
        self
    }

    /// Replaces the tail by a shifted power law fitted on the upper half of the
    /// retained eigenvalues.
    pub fn with_fitted_tail(self) -> Result<Self> {
        let k = self.len();
        if k < 8 {
            return domain(format!("need at least 8 eigenvalues for a tail fit, got {k}"));
        }
        let tail = fit_shifted_power(&self.lambdas, k / 2, k)?;
        Ok(self.with_tail(tail))
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// `Σ λ_k` including the tail.
    pub fn trace(&self) -> f64 {
        self.sums(0.0)[1]
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "k,lambda")?;
        for (k, l) in self.lambdas.iter().enumerate() {
            writeln!(out, "{},{}", k + 1, l)?;
        }
        Ok(())
    }

    /// `[Σ ½log(1+uλ), Σ λ/(1+uλ), Σ (λ/(1+uλ))², Σ (..)³, Σ (..)⁴]` for `u ≥ 0`.
    pub(crate) fn sums(&self, u: f64) -> [f64; 5] {
        let mut acc = [0.0; 5];
        let mut add = |l: f64| {
            let r = l / (1.0 + u * l);
            acc[0] += 0.5 * (u * l).ln_1p();
            acc[1] += r;
            acc[2] += r * r;
            acc[3] += r * r * r;
            acc[4] += r * r * r * r;
        };
        self.lambdas.iter().for_each(|&l| add(l));
        if let Some(t) = self.tail {
            let k = self.lambdas.len();
            let last = k.max(EXPLICIT_TAIL);
            (k + 1..=last).for_each(|j| add(t.at(j)));
            let x0 = last as f64 + 0.5;
            let rest = TailIntegral::new(t, x0);
            acc[0] += rest.half_log(u);
            for (m, a) in acc.iter_mut().enumerate().skip(1) {
                *a += rest.ratio_power(m as i32, u);
            }
        }
        acc
    }

    /// `Σ ½arctan(λv)` and `Σ ¼log(1+λ²v²)` for Imhof's formula.
    fn imhof_sums(&self, v: f64) -> (f64, f64) {
        let mut th = 0.0;
        let mut lr = 0.0;
        let mut add = |l: f64| {
            th += 0.5 * (l * v).atan();
            lr += 0.25 * (l * l * v * v).ln_1p();
        };
        self.lambdas.iter().for_each(|&l| add(l));
        if let Some(t) = self.tail {
            let k = self.lambdas.len();
            let last = k.max(IMHOF_EXPLICIT_TAIL);
            (k + 1..=last).for_each(|j| add(t.at(j)));
            let rest = TailIntegral::new(t, last as f64 + 0.5);
            let (a, b) = rest.imhof(v);
            th += 0.5 * a;
            lr += b;
        }
        (th, lr)
    }
}

/// Integrals `∫_{x0}^∞ φ(c (x-s)^{-ρ}) dx` in closed form through incomplete Beta functions.
struct TailIntegral {
    c: f64,
    rho: f64,
    x0: f64,
    shift: f64,
    y0: f64,
}

/// `∫_0^top y^{a-1} (1+uy)^{-m} dy` with `m > a > 0`.
fn j_int(a: f64, m: f64, u: f64, top: f64) -> f64 {
    let w0 = u * top;
    if w0 < 1e-4 {
        let mut s = top.powf(a) / a;
        s -= m * u * top.powf(a + 1.0) / (a + 1.0);
        s += 0.5 * m * (m + 1.0) * u * u * top.powf(a + 2.0) / (a + 2.0);
        return s;
    }
    let x0 = w0 / (1.0 + w0);
    u.powf(-a) * beta(a, m - a) * beta_reg(a, m - a, x0)
}

impl TailIntegral {
    fn new(t: PowerTail, x0: f64) -> Self {
        Self { c: t.scale, rho: t.exponent, x0, shift: t.shift, y0: t.scale * (x0 - t.shift).powf(-t.exponent) }
    }

    fn pref(&self) -> f64 {
        self.c.powf(1.0 / self.rho) / self.rho
    }

    fn ratio_power(&self, m: i32, u: f64) -> f64 {
        let mf = m as f64;
        self.pref() * j_int(mf - 1.0 / self.rho, mf, u, self.y0)
    }

    fn half_log(&self, u: f64) -> f64 {
        if u == 0.0 {
            return 0.0;
        }
        let r = self.rho;
        0.5 * (u * self.c.powf(1.0 / r) * j_int(1.0 - 1.0 / r, 1.0, u, self.y0)
            - (self.x0 - self.shift) * (u * self.y0).ln_1p())
    }

    /// `(∫ arctan(λv), ∫ ¼log(1+λ²v²))`.
    fn imhof(&self, v: f64) -> (f64, f64) {
        if v == 0.0 {
            return (0.0, 0.0);
        }
        let r = self.rho;
        let p = self.pref();
        let y0 = self.y0;
        let head = y0.powf(-1.0 / r);
        let u = v * v;
        let at = p * (-r * head * (v * y0).atan() + r * v * 0.5 * j_int(0.5 - 0.5 / r, 1.0, u, y0 * y0));
        let lg =
            p * (-0.25 * r * head * (u * y0 * y0).ln_1p() + 0.5 * r * u * 0.5 * j_int(1.0 - 0.5 / r, 1.0, u, y0 * y0));
        (at, lg)
    }
}

/// Descending eigenvalues of a symmetric row-major matrix.
fn sym_eigenvalues(data: &[f64], n: usize) -> Result<Vec<f64>> {
    let m = Mat::<f64>::from_fn(n, n, |i, j| data[i * n + j]);
    let mut ev = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("symmetric eigensolver failed: {e:?}")))?;
    ev.reverse();
    Ok(ev)
}

/// Top-`k` eigenvalues of `(1/n) C` on the grid points.
pub fn nystrom_eigen(cov: &CovMatrix, k: usize) -> Result<EigenSpectrum> {
    let n = cov.n();
    if k > n || k == 0 {
        return domain(format!("requested {k} eigenvalues from a grid of {n}"));
    }
    let scaled: Vec<f64> = cov.data.iter().map(|v| v / n as f64).collect();
    let mut ev = sym_eigenvalues(&scaled, n)?;
    ev.truncate(k);
    Ok(EigenSpectrum::from_values(ev, n))
}

fn midpoint_eigen(cov: &Covariance, n: usize) -> Result<Vec<f64>> {
    let pts: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let m: Vec<f64> = cov.matrix_at(&pts).into_iter().map(|v| v / n as f64).collect();
    sym_eigenvalues(&m, n)
}

const GRADED_LEVELS: i32 = 40;
const GRADED_DEG: usize = 12;

fn graded_eigen(cov: &Covariance) -> Result<(Vec<f64>, usize)> {
    let leg = legendre01(GRADED_DEG);
    let mut edges = vec![0.0];
    edges.extend((0..=GRADED_LEVELS).rev().map(|k| 0.5f64.powi(k)));
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for w in edges.windows(2) {
        let h = w[1] - w[0];
        for &(x, wt) in leg.iter() {
            nodes.push(w[0] + h * x);
            weights.push((h * wt).sqrt());
        }
    }
    let n = nodes.len();
    let mut m = cov.matrix_at(&nodes);
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] *= weights[i] * weights[j];
        }
    }
    Ok((sym_eigenvalues(&m, n)?, n))
}

fn smooth_family(spec: &ProcessSpec) -> bool {
    match spec {
        ProcessSpec::FbmRlDifference { .. } => true,
        ProcessSpec::Integrated { base, .. } | ProcessSpec::FracIntegrated { base, .. } => smooth_family(base),
        _ => false,
    }
}

/// Fits `λ_j = c (j - s)^{-ρ}` on `j ∈ [lo, hi]` (1-based), profiling the shift.
fn fit_shifted_power(lambdas: &[f64], lo: usize, hi: usize) -> Result<PowerTail> {
    if hi > lambdas.len() || hi < lo + 2 || lo == 0 {
        return domain(format!("power fit needs at least 3 indices inside the spectrum, got [{lo}, {hi}]"));
    }
    let js: Vec<f64> = (lo..=hi).map(|j| j as f64).collect();
    let ys: Vec<f64> = lambdas[lo - 1..hi].iter().map(|l| l.ln()).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return domain("power fit needs positive eigenvalues");
    }
    let ones = vec![1.0; js.len()];
    let fit = |s: f64| {
        let xs: Vec<f64> = js.iter().map(|j| (j - s).ln()).collect();
        let (c0, c1) = weighted_line(&xs, &ys, &ones);
        let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - c0 - c1 * x).powi(2)).sum();
        (rss, c0, c1)
    };
    let s_hi = (lo as f64 - 0.5).min(2.0);
    let s_lo = -2.0;
    let steps = 400;
    let grid: Vec<f64> = (0..=steps).map(|i| s_lo + (s_hi - s_lo) * i as f64 / steps as f64).collect();
    let best = grid.iter().enumerate().min_by(|a, b| fit(*a.1).0.total_cmp(&fit(*b.1).0)).map(|(i, _)| i).unwrap();
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(steps)];
    let s = if fit(grid[best]).0 == 0.0 { grid[best] } else { golden_min(|s| fit(s).0, a, b, 1e-12) };
    let (_, c0, c1) = fit(s);
    Ok(PowerTail { scale: c0.exp(), shift: s, exponent: -c1 })
}

/// Karhunen–Loève eigenvalues of a Gaussian spec.
///
/// Kinked kernels use midpoint Nyström at `n` and `n/2` with Richardson extrapolation,
/// and a power tail fitted on `[k/2, k]`. Kernels of the smooth fBM-minus-RL family
/// use a dyadically graded Gauss–Legendre Nyström rule instead, since their
/// eigenvalues fall off faster than any power and the kernel is singular at 0.
pub fn kl_spectrum(spec: &ProcessSpec, n: usize, k: usize) -> Result<EigenSpectrum> {
    let cov = Covariance::new(spec)?;
    if smooth_family(spec) {
        let (mut ev, nodes) = graded_eigen(&cov)?;
        ev.truncate(k);
        return Ok(EigenSpectrum::from_values(ev, nodes));
    }
    if k < 8 || 8 * k > n {
        return domain(format!("need 8 ≤ k ≤ n/8 for a tail fit, got k = {k}, n = {n}"));
    }
    let fine = midpoint_eigen(&cov, n)?;
    let coarse = midpoint_eigen(&cov, n / 2)?;
    let rich: Vec<f64> = (0..k).map(|j| (4.0 * fine[j] - coarse[j]) / 3.0).collect();
    let tail = fit_shifted_power(&rich, k / 2, k)?;
    Ok(EigenSpectrum::from_values(rich, n).with_tail(tail))
}

/// Kernel `∂²R/∂s∂t` sampled at cell midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedKernel {
    pub grid: Grid,
    /// Row-major `n × n`.
    pub data: Vec<f64>,
}

impl DerivedKernel {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.grid.n() + j]
    }

    /// Nyström spectrum of the derived kernel.
    pub fn spectrum(&self, k: usize) -> Result<EigenSpectrum> {
        nystrom_eigen(&CovMatrix { grid: self.grid, data: self.data.clone() }, k)
    }
}

/// Mixed second difference of the covariance with step `1/n`. On the diagonal, where
/// the cell straddles the kink of the derivative kernel, the value is the average of
/// the linear extrapolations from either side.
pub fn derivative_kernel(spec: &ProcessSpec, grid: Grid) -> Result<DerivedKernel> {
    let ok = match spec {
        ProcessSpec::Integrated { .. } => true,
        ProcessSpec::FracIntegrated { order, .. } => *order >= 1.0,
        _ => false,
    };
    if !ok {
        return Err(Error::Unsupported("derivative kernel needs an integrated process of order at least 1".into()));
    }
    let cov = Covariance::new(spec)?;
    let n = grid.n();
    let r = cov.matrix_at(&grid.points());
    let np = n + 1;
    let scale = (n * n) as f64;
    let mut d = vec![0.0; n * n];
    for i in 1..=n {
        for j in 1..=n {
            d[(i - 1) * n + (j - 1)] =
                scale * (r[i * np + j] - r[i * np + j - 1] - r[(i - 1) * np + j] + r[(i - 1) * np + j - 1]);
        }
    }
    let at = |d: &Vec<f64>, i: usize, j: usize| d[i * n + j];
    let mut diag = vec![0.0; n];
    for (i, slot) in diag.iter_mut().enumerate() {
        let mut est = Vec::with_capacity(2);
        if i + 2 < n {
            est.push(2.0 * at(&d, i, i + 1) - at(&d, i, i + 2));
        }
        if i >= 2 {
            est.push(2.0 * at(&d, i, i - 1) - at(&d, i, i - 2));
        }
        *slot = if est.is_empty() { at(&d, i, i) } else { est.iter().sum::<f64>() / est.len() as f64 };
    }
    for (i, v) in diag.into_iter().enumerate() {
        d[i * n + i] = v;
    }
    Ok(DerivedKernel { grid, data: d })
}

/// `E exp(-λ²/2 ‖X‖²_{L2}) = Π_k (1 + λ² λ_k)^{-1/2}`.
pub fn laplace_transform_l2(spectrum: &EigenSpectrum, lambda: f64) -> f64 {
    (-log_laplace(spectrum, lambda)).exp()
}

/// `-log` of [`laplace_transform_l2`].
pub fn log_laplace(spectrum: &EigenSpectrum, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    spectrum.sums(lambda * lambda)[0]
}

/// `-log P(Σ λ_k ξ_k² ≤ ε²)`.
///
/// Second-order Lugannani–Rice in the lower tail; where that estimate puts the
/// probability above `1e-4` and the spectrum is long enough for its characteristic
/// function to decay quickly, Imhof's inversion integral is used instead.
pub fn l2_smallball(spectrum: &EigenSpectrum, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return domain(format!("radius {eps} must be positive"));
    }
    if spectrum.is_empty() {
        return domain("empty spectrum");
    }
    let x = eps * eps;
    let long = spectrum.tail.is_some() || spectrum.len() >= 8;
    let sp = saddlepoint(spectrum, x);
    match sp {
        Some(v) if v > 1e-4f64.ln().abs() || !long => Ok(v),
        _ if long => {
            // with only a few effective modes the inversion integrand decays too slowly
            // to converge; the saddlepoint value stands in when there is one
            match (imhof(spectrum, x), sp) {
                (Ok(p), _) if p > 0.0 => Ok(-p.ln()),
                (_, Some(v)) => Ok(v),
                (Ok(_), None) => Err(Error::Numerical("inversion integral returned a nonpositive probability".into())),
                (Err(e), None) => Err(e),
            }
        }
        _ => Err(Error::Numerical(format!(
            "saddlepoint has no lower-tail root at radius {eps} and the spectrum is too short to invert"
        ))),
    }
}

/// Lugannani–Rice with the second-order correction, or `None` above the mean.
fn saddlepoint(sp: &EigenSpectrum, x: f64) -> Option<f64> {
    let mean = sp.sums(0.0)[1];
    if x >= mean * (1.0 - 1e-6) {
        return None;
    }
    let mut hi = 1.0 / mean;
    while sp.sums(hi)[1] > x {
        hi *= 4.0;
        if !hi.is_finite() {
            return None;
        }
    }
    let lo = (hi / 4.0).max(1e-300);
    let lu = bisect(|lu: f64| sp.sums(lu.exp())[1] - x, lo.ln(), hi.ln(), 200);
    let u = lu.exp();
    let s = sp.sums(u);
    let k2 = 2.0 * s[2];
    let k3 = 8.0 * s[3];
    let k4 = 48.0 * s[4];
    let w2 = 2.0 * s[0] - u * x;
    if !(w2 > 0.0) {
        return None;
    }
    let w = -w2.sqrt();
    let uu = -0.5 * u * k2.sqrt();
    let l3 = k3 / k2.powf(1.5);
    let l4 = k4 / (k2 * k2);
    let corr =
        (1.0 / uu) * (l4 / 8.0 - 5.0 * l3 * l3 / 24.0) - 1.0 / uu.powi(3) - l3 / (2.0 * uu * uu) + 1.0 / w.powi(3);
    let r = mills_lower(w) + 1.0 / w - 1.0 / uu - corr;
    if !(r > 0.0) {
        return None;
    }
    // log density directly: the density itself underflows for tiny radii
    Some(0.5 * w * w + 0.5 * (2.0 * PI).ln() - r.ln())
}

const IMHOF_DEG: usize = 16;
const IMHOF_MAX_SEGMENTS: usize = 200_000;
/// Half-periods of the far-field oscillation fed to the extrapolation.
const IMHOF_MAX_PERIODS: usize = 4000;

/// Wynn's ε-algorithm on the partial sums seen so far; returns the last even-column entry.
fn wynn(sums: &[f64]) -> f64 {
    let mut prev = vec![0.0; sums.len() + 1];
    let mut cur: Vec<f64> = sums.to_vec();
    let mut best = *sums.last().unwrap();
    let mut col = 0;
    while cur.len() > 1 {
        let next: Vec<f64> = (0..cur.len() - 1)
            .map(|i| {
                let d = cur[i + 1] - cur[i];
                if d == 0.0 {
                    f64::INFINITY
                } else {
                    prev[i + 1] + 1.0 / d
                }
            })
            .collect();
        col += 1;
        if next.iter().any(|v| !v.is_finite()) {
            break;
        }
        if col % 2 == 0 {
            best = *next.last().unwrap();
        }
        prev = cur;
        cur = next;
    }
    best
}

fn imhof(sp: &EigenSpectrum, x: f64) -> Result<f64> {
    let leg = legendre01(IMHOF_DEG);
    let trace = sp.trace();
    let top = sp.lambdas[0];
    let integrand = |v: f64| {
        let (th, lr) = sp.imhof_sums(v);
        let theta = th - 0.5 * x * v;
        theta.sin() / (v * lr.exp())
    };
    let retained_rate = |v: f64| 0.5 * sp.lambdas.iter().map(|l| l / (1.0 + l * l * v * v)).sum::<f64>();
    let dtheta = |v: f64| 0.5 * retained_rate(v).min(0.5 * trace) + 0.5 * x;
    let envelope = |v: f64| 1.0 / (v * sp.imhof_sums(v).1.exp());
    let mut v: f64 = 0.0;
    let mut total = 0.0;
    let h_min = 0.05 / top;
    let mut segments = 0;
    // near field: adaptive panels until the phase is driven by x alone
    loop {
        let h = (0.5 * v).max(h_min).min(0.5 * PI / dtheta(v));
        total += leg.iter().map(|&(t, w)| w * integrand(v + h * t)).sum::<f64>() * h;
        v += h;
        segments += 1;
        if envelope(v) * v < 1e-14 {
            return Ok(0.5 - total / PI);
        }
        if retained_rate(v) < 0.02 * x {
            break;
        }
        if segments >= IMHOF_MAX_SEGMENTS {
            return Err(Error::Numerical("inversion integral did not converge".into()));
        }
    }
    // far field: the integrand is a slowly modulated sine of half-period 2π/x;
    // integrate period by period and extrapolate the partial sums
    let half = 2.0 * PI / x;
    let mut sums = vec![total];
    let mut last = f64::NAN;
    for _ in 0..IMHOF_MAX_PERIODS {
        for q in 0..4 {
            let a = v + 0.25 * half * q as f64;
            total += leg.iter().map(|&(t, w)| w * integrand(a + 0.25 * half * t)).sum::<f64>() * 0.25 * half;
        }
        v += half;
        sums.push(total);
        if sums.len() > 40 {
            sums.remove(0);
        }
        if envelope(v) * half < 1e-14 {
            return Ok(0.5 - total / PI);
        }
        if sums.len() >= 8 {
            let est = wynn(&sums);
            if (est - last).abs() < 1e-13 * est.abs().max(1.0) {
                return Ok(0.5 - est / PI);
            }
            last = est;
        }
    }
    Err(Error::Numerical("inversion integral did not converge".into()))
}

/// Decay of an eigenvalue sequence fitted as `λ_k ≈ c (k - s)^{slope}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenFit {
    pub slope: f64,
    pub shift: f64,
    pub scale: f64,
}

/// Log-log slope of `λ_k` against `k - s` over `k ∈ [lo, hi]` with the offset `s`
/// profiled out; `s = 0` recovers the plain log-log regression.
pub fn eigen_rate_fit(spectrum: &EigenSpectrum, lo: usize, hi: usize) -> Result<EigenFit> {
    if hi < lo + 2 {
        return domain("eigen rate fit needs at least 3 points");
    }
    if hi > spectrum.len() {
        return domain(format!("range ends at {hi} but the spectrum has {} values", spectrum.len()));
    }
    let t = fit_shifted_power(&spectrum.lambdas, lo, hi)?;
    Ok(EigenFit { slope: -t.exponent, shift: t.shift, scale: t.scale })
}
