//! Γ-normalized Riemann–Liouville integration and its inverse on uniform grids.
//!
//! `I^M f(t) = Γ(M)^{-1} ∫_0^t (t-s)^{M-1} f(s) ds`, discretized by product integration
//! against the piecewise-linear interpolant of `f`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{domain, Error, Result};
use crate::grid::SamplePath;

/// Value assumed for `f(t_0)`, which a path does not store.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Origin {
    #[default]
    Zero,
    Value(f64),
    /// Linear extrapolation from `t_1` and `t_2`.
    Extrapolate,
}

fn check_order(m: f64) -> Result<()> {
    if m > 0.0 && m.is_finite() {
        Ok(())
    } else {
        domain(format!("fractional order {m} must be positive and finite"))
    }
}

/// Weights of the product-trapezoid rule: `F_i = c (w0_i f_0 + Σ_{j=1}^{i} b_{i-j} f_j)`.
struct Weights {
    c: f64,
    /// `b_0 = 1`, `b_k = (k+1)^{M+1} - 2k^{M+1} + (k-1)^{M+1}`.
    b: Vec<f64>,
    /// Weight of `f_0` at each `i ≥ 1`, index `i - 1`.
    w0: Vec<f64>,
}

impl Weights {
    fn new(n: usize, m: f64) -> Self {
        let h = 1.0 / n as f64;
        let e = m + 1.0;
        let pw = |k: f64| k.powf(e);
        let mut b = vec![1.0; n];
        for (k, bk) in b.iter_mut().enumerate().skip(1) {
            let kf = k as f64;
            *bk = pw(kf + 1.0) - 2.0 * pw(kf) + pw(kf - 1.0);
        }
        let w0 = (1..=n)
            .map(|i| {
                let fi = i as f64;
                pw(fi - 1.0) - (fi - 1.0 - m) * fi.powf(m)
            })
            .collect();
        Self { c: h.powf(m) / gamma(m + 2.0), b, w0 }
    }
}

fn resolve_origin(values: &[f64], origin: Origin) -> f64 {
    match origin {
        Origin::Zero => 0.0,
        Origin::Value(v) => v,
        Origin::Extrapolate => {
            if values.len() >= 2 {
                2.0 * values[0] - values[1]
            } else {
                values[0]
            }
        }
    }
}

/// `M = k + r` with `r ∈ (0, 1]`. Orders above one are applied as `k` unit steps
/// followed by one step of order `r`: product-trapezoid weights of a single order
/// above one form a triangular system whose inverse grows geometrically with `n`.
fn split_order(m: f64) -> (usize, f64) {
    let k = (m.ceil() - 1.0).max(0.0) as usize;
    (k, m - k as f64)
}

/// Compensated running sum; the solves subtract nearly equal sums of size `O(n^M)`.
#[derive(Default)]
struct Kahan {
    sum: f64,
    err: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        self.err += if self.sum.abs() >= v.abs() { (self.sum - t) + v } else { (v - t) + self.sum };
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.err
    }
}

fn integrate_step(x: &[f64], w: &Weights, f0: f64) -> Vec<f64> {
    (1..=x.len())
        .map(|i| {
            let mut s = Kahan::default();
            s.add(w.w0[i - 1] * f0);
            for j in 1..=i {
                s.add(w.b[i - j] * x[j - 1]);
            }
            w.c * s.value()
        })
        .collect()
}

/// Forward substitution for one step of order at most one.
fn solve_step(big_f: &[f64], w: &Weights, origin: Origin) -> Result<Vec<f64>> {
    let n = big_f.len();
    if !(w.c.is_finite() && w.c > 0.0) {
        return Err(Error::Numerical("degenerate leading weight".into()));
    }
    let rhs: Vec<f64> = big_f.iter().map(|v| v / w.c).collect();
    let mut f = vec![0.0; n];
    let (f0, start) = match origin {
        Origin::Zero => (0.0, 0),
        Origin::Value(v) => (v, 0),
        Origin::Extrapolate => {
            if n < 2 {
                return domain("extrapolated origin needs at least two points");
            }
            // f0 = 2 f1 - f2 in
            //   rhs0 = w0_1 f0 + f1
            //   rhs1 = w0_2 f0 + b1 f1 + f2
            let (a11, a12) = (2.0 * w.w0[0] + 1.0, -w.w0[0]);
            let (a21, a22) = (2.0 * w.w0[1] + w.b[1], 1.0 - w.w0[1]);
            let det = a11 * a22 - a12 * a21;
            if det.abs() < 1e-300 {
                return Err(Error::Numerical("singular start-up system".into()));
            }
            f[0] = (rhs[0] * a22 - a12 * rhs[1]) / det;
            f[1] = (a11 * rhs[1] - a21 * rhs[0]) / det;
            (2.0 * f[0] - f[1], 2)
        }
    };
    for i in start + 1..=n {
        let mut s = Kahan::default();
        s.add(rhs[i - 1]);
        s.add(-w.w0[i - 1] * f0);
        for j in 1..i {
            s.add(-w.b[i - j] * f[j - 1]);
        }
        f[i - 1] = s.value();
    }
    Ok(f)
}

/// `I^M f` at the grid points with `f(t_0) = 0`.
pub fn frac_integral(f: &SamplePath, m: f64) -> Result<SamplePath> {
    frac_integral_from(f, m, Origin::Zero)
}

pub fn frac_integral_from(f: &SamplePath, m: f64, origin: Origin) -> Result<SamplePath> {
    check_order(m)?;
    let n = f.grid.n();
    let (k, r) = split_order(m);
    let mut f0 = resolve_origin(&f.values, origin);
    let mut x = f.values.clone();
    if k > 0 {
        let unit = Weights::new(n, 1.0);
        for _ in 0..k {
            x = integrate_step(&x, &unit, f0);
            f0 = 0.0;
        }
    }
    x = integrate_step(&x, &Weights::new(n, r), f0);
    SamplePath::new(f.grid, x)
}

/// Inverse of [`frac_integral`]: forward substitution through each step in reverse.
pub fn frac_derivative(big_f: &SamplePath, m: f64) -> Result<SamplePath> {
    frac_derivative_from(big_f, m, Origin::Zero)
}

/// With [`Origin::Extrapolate`] the first two unknowns are solved jointly with `f_0`.
pub fn frac_derivative_from(big_f: &SamplePath, m: f64, origin: Origin) -> Result<SamplePath> {
    check_order(m)?;
    let n = big_f.grid.n();
    let (k, r) = split_order(m);
    let first = if k == 0 { origin } else { Origin::Zero };
    let mut x = solve_step(&big_f.values, &Weights::new(n, r), first)?;
    if k > 0 {
        let unit = Weights::new(n, 1.0);
        for step in 0..k {
            let o = if step + 1 == k { origin } else { Origin::Zero };
            x = solve_step(&x, &unit, o)?;
        }
    }
    SamplePath::new(big_f.grid, x).map_err(|_| Error::Numerical("fractional derivative overflowed".into()))
}

/// `‖I^b I^a f - I^{a+b} f‖_∞` on the grid.
pub fn semigroup_check(f: &SamplePath, a: f64, b: f64) -> Result<f64> {
    semigroup_check_from(f, a, b, Origin::Zero)
}

/// As [`semigroup_check`], with the origin applied to `f` only; `I^a f` vanishes at 0.
pub fn semigroup_check_from(f: &SamplePath, a: f64, b: f64, origin: Origin) -> Result<f64> {
    let inner = frac_integral_from(f, a, origin)?;
    let lhs = frac_integral(&inner, b)?;
    let rhs = frac_integral_from(f, a + b, origin)?;
    Ok(lhs.max_abs_diff(&rhs))
}
