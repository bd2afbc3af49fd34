//! Exact-covariance path sampling.

use std::sync::Arc;

use faer::{Mat, MatRef, Side};
use rand::{Rng, RngExt};
use rand_distr::{Distribution, Exp1, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{domain, Error, Result};
use crate::grid::{Grid, SamplePath};
use crate::mc::map_chunks;
use crate::process::{build_cov, ProcessSpec};

/// Draws from the positive stable law with `E exp(-uA) = exp(-u^a)`, `a ∈ (0, 1)`.
///
/// Kanter's representation of the Chambers–Mallows–Stuck construction.
pub fn draw_positive_stable<R: Rng + ?Sized>(alpha_half: f64, rng: &mut R) -> f64 {
    let a = alpha_half;
    loop {
        let v = std::f64::consts::PI * rng.random::<f64>();
        let e: f64 = Exp1.sample(rng);
        if v == 0.0 || e == 0.0 {
            continue;
        }
        let x = (a * v).sin() / v.sin().powf(1.0 / a) * (((1.0 - a) * v).sin() / e).powf((1.0 - a) / a);
        if x.is_finite() && x > 0.0 {
            return x;
        }
    }
}

pub fn sample_positive_stable(alpha_half: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    if !(alpha_half > 0.0 && alpha_half < 1.0) {
        return domain(format!("stable index {alpha_half} must lie in (0, 1)"));
    }
    Ok(map_chunks(count, seed, |rng, size| {
        (0..size).map(|_| draw_positive_stable(alpha_half, rng)).collect::<Vec<_>>()
    })
    .concat())
}

#[derive(Clone)]
enum Backend {
    /// Scaled partial sums of iid normals.
    Cumsum { scale: f64 },
    /// Davies–Harte embedding of fractional Gaussian noise.
    Circulant { hurst: f64, sqrt_eig: Arc<Vec<f64>>, fft: Arc<dyn Fft<f64>> },
    /// Lower Cholesky factor of the grid covariance.
    Dense { chol: Arc<Mat<f64>> },
}

/// Draws paths of one spec on one grid.
#[derive(Clone)]
pub struct Sampler {
    grid: Grid,
    backend: Backend,
    /// `α/2` for the stable-scaled family.
    stable: Option<f64>,
}

/// A chunk of paths stored path after path, plus the per-path random scale.
pub struct Batch {
    pub n: usize,
    pub values: Vec<f64>,
    /// `A^{1/2}` for stable-scaled draws, else empty.
    pub scales: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.values.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn path(&self, k: usize) -> &[f64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }
}

const JITTER_START: f64 = 1e-12;
const JITTER_MAX: f64 = 1e-6;

/// Lower Cholesky factor with the diagonal jitter ladder.
pub(crate) fn cholesky_with_jitter(cov: &[f64], n: usize) -> Result<Mat<f64>> {
    let trace: f64 = (0..n).map(|i| cov[i * n + i]).sum();
    let base = trace / n as f64;
    let mut rel = 0.0;
    loop {
        let jitter = rel * base;
        let m = Mat::<f64>::from_fn(n, n, |i, j| cov[i * n + j] + if i == j { jitter } else { 0.0 });
        if let Ok(llt) = m.llt(Side::Lower) {
            return Ok(llt.L().to_owned());
        }
        rel = if rel == 0.0 { JITTER_START } else { rel * 10.0 };
        if rel > JITTER_MAX * 1.000001 {
            return Err(Error::Numerical(format!(
                "covariance not positive definite after jitter {:e}·trace/n",
                JITTER_MAX
            )));
        }
    }
}

fn fgn_autocov(h: f64, k: f64) -> f64 {
    let a = 2.0 * h;
    0.5 * ((k + 1.0).abs().powf(a) - 2.0 * k.abs().powf(a) + (k - 1.0).abs().powf(a))
}

fn circulant(hurst: f64, n: usize) -> Option<Backend> {
    let m = 2 * n;
    let mut c: Vec<Complex<f64>> = (0..m)
        .map(|j| {
            let k = if j <= n { j } else { m - j };
            Complex::new(fgn_autocov(hurst, k as f64), 0.0)
        })
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(m);
    fft.process(&mut c);
    let max = c.iter().map(|z| z.re).fold(0.0, f64::max);
    if c.iter().any(|z| z.re < -1e-10 * max) {
        return None;
    }
    let sqrt_eig = c.iter().map(|z| (z.re.max(0.0) / m as f64).sqrt()).collect();
    Some(Backend::Circulant { hurst, sqrt_eig: Arc::new(sqrt_eig), fft })
}

fn gaussian_backend(spec: &ProcessSpec, grid: Grid) -> Result<Backend> {
    let n = grid.n();
    match spec {
        ProcessSpec::BrownianMotion => return Ok(Backend::Cumsum { scale: 1.0 }),
        ProcessSpec::FractionalBm { hurst } | ProcessSpec::RiemannLiouville { hurst } if *hurst == 0.5 => {
            return Ok(Backend::Cumsum { scale: 1.0 })
        }
        ProcessSpec::FractionalBm { hurst } => {
            if let Some(b) = circulant(*hurst, n) {
                return Ok(b);
            }
        }
        _ => {}
    }
    let cov = build_cov(spec, grid)?;
    Ok(Backend::Dense { chol: Arc::new(cholesky_with_jitter(&cov.data, n)?) })
}

fn normals<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

impl Sampler {
    pub fn new(spec: &ProcessSpec, grid: Grid) -> Result<Self> {
        spec.validate()?;
        match spec {
            ProcessSpec::StableScaledFbm { hurst, alpha } => Ok(Self {
                grid,
                backend: gaussian_backend(&ProcessSpec::FractionalBm { hurst: *hurst }, grid)?,
                stable: Some(alpha / 2.0),
            }),
            _ => Ok(Self { grid, backend: gaussian_backend(spec, grid)?, stable: None }),
        }
    }

    /// Forces the dense Cholesky backend, for cross-checking the fast paths.
    pub fn dense(spec: &ProcessSpec, grid: Grid) -> Result<Self> {
        spec.validate()?;
        let (gauss, stable) = match spec {
            ProcessSpec::StableScaledFbm { hurst, alpha } => {
                (ProcessSpec::FractionalBm { hurst: *hurst }, Some(alpha / 2.0))
            }
            other => (other.clone(), None),
        };
        let cov = build_cov(&gauss, grid)?;
        let chol = cholesky_with_jitter(&cov.data, grid.n())?;
        Ok(Self { grid, backend: Backend::Dense { chol: Arc::new(chol) }, stable })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn draw<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Batch {
        let n = self.grid.n();
        let mut values = vec![0.0; n * size];
        match &self.backend {
            Backend::Cumsum { scale } => {
                let s = scale / (n as f64).sqrt();
                for path in values.chunks_mut(n) {
                    let mut acc = 0.0;
                    for v in path.iter_mut() {
                        let z: f64 = StandardNormal.sample(rng);
                        acc += z;
                        *v = s * acc;
                    }
                }
            }
            Backend::Circulant { hurst, sqrt_eig, fft } => {
                let m = 2 * n;
                let s = (n as f64).powf(-hurst);
                let mut buf = vec![Complex::new(0.0, 0.0); m];
                let mut k = 0;
                while k < size {
                    for (b, l) in buf.iter_mut().zip(sqrt_eig.iter()) {
                        let re: f64 = StandardNormal.sample(rng);
                        let im: f64 = StandardNormal.sample(rng);
                        *b = Complex::new(l * re, l * im);
                    }
                    fft.process(&mut buf);
                    for part in 0..2 {
                        if k >= size {
                            break;
                        }
                        let path = &mut values[k * n..(k + 1) * n];
                        let mut acc = 0.0;
                        for (v, z) in path.iter_mut().zip(&buf) {
                            acc += if part == 0 { z.re } else { z.im };
                            *v = s * acc;
                        }
                        k += 1;
                    }
                }
            }
            Backend::Dense { chol } => {
                let z = normals(rng, n * size);
                let zm = MatRef::from_column_major_slice(&z, n, size);
                let x = chol.as_ref() * zm;
                for k in 0..size {
                    let col = x.col(k);
                    for i in 0..n {
                        values[k * n + i] = col[i];
                    }
                }
            }
        }
        let mut scales = Vec::new();
        if let Some(a) = self.stable {
            scales = (0..size).map(|_| draw_positive_stable(a, rng).sqrt()).collect();
            for (path, s) in values.chunks_mut(n).zip(&scales) {
                path.iter_mut().for_each(|v| *v *= s);
            }
        }
        Batch { n, values, scales }
    }
}

/// `count` independent paths, a deterministic function of the arguments and the seed.
pub fn sample_paths(spec: &ProcessSpec, grid: Grid, count: usize, seed: u64) -> Result<Vec<SamplePath>> {
    if count == 0 {
        return domain("path count must be positive");
    }
    let sampler = Sampler::new(spec, grid)?;
    let batches = map_chunks(count, seed, |rng, size| sampler.draw(size, rng));
    Ok(batches
        .into_iter()
        .flat_map(|b| b.values.chunks(b.n).map(|c| SamplePath { grid, values: c.to_vec() }).collect::<Vec<_>>())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_rejects_bad_index() {
        assert!(sample_positive_stable(1.0, 10, 1).is_err());
        assert!(sample_positive_stable(0.0, 10, 1).is_err());
    }

    #[test]
    fn jitter_rescues_singular_matrix() {
        // rank one
        let cov = vec![1.0, 1.0, 1.0, 1.0];
        let l = cholesky_with_jitter(&cov, 2).unwrap();
        assert!((l[(0, 0)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn jitter_gives_up_on_indefinite_matrix() {
        let cov = vec![1.0, 2.0, 2.0, 1.0];
        assert!(matches!(cholesky_with_jitter(&cov, 2), Err(Error::Numerical(_))));
    }

    #[test]
    fn circulant_eigenvalues_nonnegative() {
        for &h in &[0.1, 0.3, 0.7, 0.9] {
            assert!(circulant(h, 256).is_some());
        }
    }
}
