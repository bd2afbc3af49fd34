//! Product quantizers built on Karhunen–Loève coordinates, with L2 distortion.

use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::{Arc, Mutex, OnceLock};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{domain, Error, Result};
use crate::mc::map_chunks;
use crate::numeric::{norm_cdf, norm_pdf, weighted_line};
use crate::spectral::EigenSpectrum;

/// Largest scalar codebook the allocator will ask for.
pub const MAX_LEVELS: usize = 1024;
// centroid residuals bottom out near 2e-13 for a thousand levels
const LLOYD_TOL: f64 = 1e-11;
const LLOYD_MAX_ITER: usize = 200_000;

/// Optimal quantizer of the standard normal with its squared distortion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarCodebook {
    pub points: Vec<f64>,
    /// `E min_i (ξ - c_i)²`.
    pub distortion_sq: f64,
}

impl ScalarCodebook {
    /// Index of the nearest codeword.
    pub fn nearest(&self, x: f64) -> usize {
        let c = &self.points;
        let i = c.partition_point(|&v| v < x);
        if i == 0 {
            0
        } else if i == c.len() || x - c[i - 1] <= c[i] - x {
            i - 1
        } else {
            i
        }
    }
}

/// Lloyd iterations to settle the cells, then Newton on the centroid conditions
/// `c_i p_i = φ(b_i) - φ(b_{i+1})`, whose Jacobian is tridiagonal. Plain Lloyd
/// converges too slowly past a few dozen levels.
fn lloyd(n: usize) -> Result<ScalarCodebook> {
    if n == 0 {
        return domain("a codebook needs at least one level");
    }
    if n == 1 {
        return Ok(ScalarCodebook { points: vec![0.0], distortion_sq: 1.0 });
    }
    // start from the asymptotically optimal point density φ^{1/3}
    let mut c: Vec<f64> = (0..n)
        .map(|i| -(3f64.sqrt()) * std::f64::consts::SQRT_2 * erfc_inv(2.0 * (i as f64 + 0.5) / n as f64))
        .collect();
    let mut prob = vec![0.0; n];
    let mut pdf = vec![0.0; n + 1];
    for it in 0..LLOYD_MAX_ITER {
        if it >= LLOYD_WARMUP && newton_step(&mut c, &mut prob, &mut pdf) {
            if let Some(book) = converged(&c, &mut prob, &mut pdf) {
                return Ok(book);
            }
            continue;
        }
        cell_edges(&c, &mut prob, &mut pdf);
        let mut shift: f64 = 0.0;
        for i in 0..n {
            let next = (pdf[i] - pdf[i + 1]) / prob[i];
            shift = shift.max((next - c[i]).abs());
            c[i] = next;
        }
        if shift < LLOYD_TOL {
            return Ok(converged(&c, &mut prob, &mut pdf).unwrap_or_else(|| distortion(c, &prob)));
        }
    }
    Err(Error::Numerical(format!("Lloyd iteration for {n} levels did not converge")))
}

const LLOYD_WARMUP: usize = 20;

fn distortion(c: Vec<f64>, prob: &[f64]) -> ScalarCodebook {
    let sum: f64 = (0..c.len()).map(|i| prob[i] * c[i] * c[i]).sum();
    ScalarCodebook { points: c, distortion_sq: 1.0 - sum }
}

/// The codebook if one more Lloyd map moves no point by more than the tolerance.
fn converged(c: &[f64], prob: &mut [f64], pdf: &mut [f64]) -> Option<ScalarCodebook> {
    cell_edges(c, prob, pdf);
    let ok = (0..c.len()).all(|i| ((pdf[i] - pdf[i + 1]) / prob[i] - c[i]).abs() < LLOYD_TOL);
    ok.then(|| distortion(c.to_vec(), prob))
}

/// One Newton step; false (with `c` untouched) if it would unsort the points.
fn newton_step(c: &mut [f64], prob: &mut [f64], pdf: &mut [f64]) -> bool {
    let n = c.len();
    cell_edges(c, prob, pdf);
    let b = |i: usize| if i == 0 || i == n { 0.0 } else { 0.5 * (c[i - 1] + c[i]) };
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        let p = prob[i];
        rhs[i] = -(c[i] * p - (pdf[i] - pdf[i + 1]));
        let hi = if i + 1 < n { 0.5 * (c[i] - b(i + 1)) * pdf[i + 1] } else { 0.0 };
        let lo = if i > 0 { -0.5 * (c[i] - b(i)) * pdf[i] } else { 0.0 };
        diag[i] = p + hi + lo;
        upper[i] = hi;
        lower[i] = lo;
    }
    // Thomas algorithm
    for i in 1..n {
        let w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    let mut dx = vec![0.0; n];
    dx[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        dx[i] = (rhs[i] - upper[i] * dx[i + 1]) / diag[i];
    }
    let next: Vec<f64> = c.iter().zip(&dx).map(|(a, d)| a + d).collect();
    if next.iter().any(|v| !v.is_finite()) || next.windows(2).any(|w| w[0] >= w[1]) {
        return false;
    }
    c.copy_from_slice(&next);
    true
}

/// Cell probabilities and `φ` at the cell boundaries (midpoints between codewords,
/// then `±∞`). Probabilities come from whichever tail keeps them free of
/// cancellation.
fn cell_edges(c: &[f64], prob: &mut [f64], pdf: &mut [f64]) {
    let n = c.len();
    let b: Vec<f64> = (0..=n)
        .map(|i| match i {
            0 => f64::NEG_INFINITY,
            _ if i == n => f64::INFINITY,
            _ => 0.5 * (c[i - 1] + c[i]),
        })
        .collect();
    for i in 0..=n {
        pdf[i] = if b[i].is_finite() { norm_pdf(b[i]) } else { 0.0 };
    }
    for i in 0..n {
        prob[i] = if b[i] >= 0.0 { norm_cdf(-b[i]) - norm_cdf(-b[i + 1]) } else { norm_cdf(b[i + 1]) - norm_cdf(b[i]) };
    }
}

type Cache = Mutex<HashMap<usize, Arc<ScalarCodebook>>>;

/// Lloyd fixed point for `n` levels, cached per process.
pub fn gauss_scalar_codebook(n: usize) -> Result<Arc<ScalarCodebook>> {
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(c) = cache.lock().unwrap().get(&n) {
        return Ok(c.clone());
    }
    let book = Arc::new(lloyd(n)?);
    cache.lock().unwrap().insert(n, book.clone());
    Ok(book)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantizer {
    pub levels: Vec<usize>,
    pub codebooks: Vec<Arc<ScalarCodebook>>,
    /// Retained eigenvalues, aligned with `levels`.
    pub lambdas: Vec<f64>,
    /// Mass of the spectrum beyond the retained eigenvalues.
    pub residual: f64,
    /// `Σ log n_k` in nats.
    pub rate: f64,
    pub budget: f64,
}

impl Quantizer {
    /// `Σ λ_k e(n_k)² + residual`, the exact squared distortion.
    pub fn distortion_sq(&self) -> f64 {
        self.lambdas.iter().zip(&self.codebooks).map(|(l, c)| l * c.distortion_sq).sum::<f64>() + self.residual
    }

    /// Nearest codeword over the full product codebook, coordinate by coordinate.
    pub fn quantize(&self, xi: &[f64]) -> Vec<f64> {
        self.codebooks.iter().zip(xi).map(|(c, &x)| c.points[c.nearest(x)]).collect()
    }

    pub fn codebook_size(&self) -> f64 {
        self.levels.iter().map(|&n| n as f64).product()
    }
}

/// Greedy allocation: repeatedly raise the level of the coordinate with the largest
/// drop of `Σ λ_k e(n_k)²` per nat, while the rate stays within `budget`.
pub fn product_quantizer(spectrum: &EigenSpectrum, budget: f64) -> Result<Quantizer> {
    if !(budget >= 0.0 && budget.is_finite()) {
        return domain(format!("budget {budget} must be a finite nonnegative number of nats"));
    }
    if spectrum.is_empty() {
        return domain("empty spectrum");
    }
    let lambdas = spectrum.lambdas.clone();
    let d = lambdas.len();
    let mut levels = vec![1usize; d];
    let mut rate = 0.0;
    loop {
        let mut best: Option<(usize, f64, f64)> = None;
        // coordinates past the first unused one cannot beat it: same gain, smaller λ
        let first_unused = levels.iter().position(|&n| n == 1).unwrap_or(d);
        for k in 0..d.min(first_unused + 1) {
            let n = levels[k];
            if n >= MAX_LEVELS {
                continue;
            }
            let cost = ((n + 1) as f64 / n as f64).ln();
            if rate + cost > budget + 1e-12 {
                continue;
            }
            let gain =
                lambdas[k] * (gauss_scalar_codebook(n)?.distortion_sq - gauss_scalar_codebook(n + 1)?.distortion_sq);
            let score = gain / cost;
            if best.is_none_or(|b| score > b.1) {
                best = Some((k, score, cost));
            }
        }
        let Some((k, _, _)) = best else { break };
        levels[k] += 1;
        rate = levels.iter().map(|&n| (n as f64).ln()).sum();
    }
    let codebooks = levels.iter().map(|&n| gauss_scalar_codebook(n)).collect::<Result<Vec<_>>>()?;
    let residual = (spectrum.sums(0.0)[1] - lambdas.iter().sum::<f64>()).max(0.0);
    Ok(Quantizer { levels, codebooks, lambdas, residual, rate, budget })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantEntry {
    pub r: f64,
    pub distortion: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantCurve {
    pub entries: Vec<QuantEntry>,
}

impl QuantCurve {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "r,distortion,stderr")?;
        for e in &self.entries {
            writeln!(out, "{},{},{}", e.r, e.distortion, e.stderr)?;
        }
        Ok(())
    }
}

/// MC estimate of `(E min_{a ∈ C} ‖X - a‖²_{L2})^{1/2}` and its standard error.
///
/// Coordinates with a single level contribute their exact mean `λ_k`, as does the
/// spectrum beyond the retained eigenvalues; only quantized coordinates are sampled.
pub fn quant_error(q: &Quantizer, n_mc: usize, seed: u64) -> Result<(f64, f64)> {
    if n_mc < 2 {
        return domain("need at least two samples");
    }
    let active: Vec<usize> = (0..q.levels.len()).filter(|&k| q.levels[k] > 1).collect();
    let exact: f64 = (0..q.levels.len()).filter(|&k| q.levels[k] == 1).map(|k| q.lambdas[k]).sum::<f64>() + q.residual;
    let sums = map_chunks(n_mc, seed, |rng, size| {
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..size {
            let v: f64 = active
                .iter()
                .map(|&k| {
                    let x: f64 = StandardNormal.sample(rng);
                    let c = &q.codebooks[k];
                    q.lambdas[k] * (x - c.points[c.nearest(x)]).powi(2)
                })
                .sum();
            s += v;
            s2 += v * v;
        }
        (s, s2)
    });
    let (s, s2) = sums.into_iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = n_mc as f64;
    let mean = s / nf;
    let var = ((s2 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    let d = (mean + exact).sqrt();
    let se = if d > 0.0 { (var / nf).sqrt() / (2.0 * d) } else { 0.0 };
    Ok((d, se))
}

/// One quantizer per budget, all scored against the same MC stream.
pub fn quant_curve(spectrum: &EigenSpectrum, budgets: &[f64], n_mc: usize, seed: u64) -> Result<QuantCurve> {
    let mut rs = budgets.to_vec();
    rs.sort_by(f64::total_cmp);
    let entries = rs
        .into_iter()
        .map(|r| {
            let q = product_quantizer(spectrum, r)?;
            let (distortion, stderr) = quant_error(&q, n_mc, seed)?;
            Ok(QuantEntry { r, distortion, stderr })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantCurve { entries })
}

/// Decay exponent `a` in `D(r) ≈ c r^{-a}`, fitted over `r ∈ [lo, hi]`.
pub fn decay_exponent(curve: &QuantCurve, lo: f64, hi: f64) -> Result<f64> {
    let pts: Vec<&QuantEntry> = curve.entries.iter().filter(|e| e.r >= lo && e.r <= hi && e.r > 0.0).collect();
    if pts.len() < 3 {
        return domain(format!("need at least 3 budgets in [{lo}, {hi}], got {}", pts.len()));
    }
    let x: Vec<f64> = pts.iter().map(|e| e.r.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|e| e.distortion.ln()).collect();
    let (_, slope) = weighted_line(&x, &y, &vec![1.0; x.len()]);
    Ok(-slope)
}
