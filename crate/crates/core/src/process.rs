//! Process families and their covariance kernels.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{domain, Error, Result};
use crate::grid::Grid;
use crate::numeric::{jacobi01, legendre01, power_integral};

/// Centered process on [0, 1] started at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    BrownianMotion,
    FractionalBm {
        hurst: f64,
    },
    RiemannLiouville {
        hurst: f64,
    },
    Integrated {
        base: Box<ProcessSpec>,
        m: u32,
    },
    FracIntegrated {
        base: Box<ProcessSpec>,
        order: f64,
    },
    /// `c_H B^H - R^H`, the part of a fractional Brownian motion driven by the past.
    FbmRlDifference {
        hurst: f64,
    },
    /// `R^H + Σ a_n R^{H+n}` with a single driving Brownian motion.
    GaussianConvolution {
        hurst: f64,
        coeffs: Vec<f64>,
    },
    /// `A^{1/2} B^H` with `A` positive `(α/2)`-stable and independent of `B^H`.
    StableScaledFbm {
        hurst: f64,
        alpha: f64,
    },
}

const MAX_DEPTH: usize = 16;

impl ProcessSpec {
    pub fn integrated(base: ProcessSpec, m: u32) -> Self {
        Self::Integrated { base: Box::new(base), m }
    }

    pub fn frac_integrated(base: ProcessSpec, order: f64) -> Self {
        Self::FracIntegrated { base: Box::new(base), order }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_depth(0)
    }

    fn validate_depth(&self, depth: usize) -> Result<()> {
        if depth > MAX_DEPTH {
            return domain("integration nesting is too deep");
        }
        let hurst_unit = |h: f64| {
            if h > 0.0 && h < 1.0 {
                Ok(())
            } else {
                domain(format!("Hurst index {h} must lie in (0, 1)"))
            }
        };
        match self {
            Self::BrownianMotion => Ok(()),
            Self::FractionalBm { hurst } => hurst_unit(*hurst),
            Self::RiemannLiouville { hurst } => {
                if *hurst > 0.0 && hurst.is_finite() {
                    Ok(())
                } else {
                    domain(format!("Riemann–Liouville index {hurst} must be positive"))
                }
            }
            Self::Integrated { base, m } => {
                if *m == 0 {
                    return domain("integration count must be positive");
                }
                if base.is_stable() {
                    return Err(Error::Unsupported("integrating a stable-scaled process".into()));
                }
                base.validate_depth(depth + 1)
            }
            Self::FracIntegrated { base, order } => {
                if !(*order > 0.0 && order.is_finite()) {
                    return domain(format!("integration order {order} must be positive"));
                }
                if base.is_stable() {
                    return Err(Error::Unsupported("integrating a stable-scaled process".into()));
                }
                base.validate_depth(depth + 1)
            }
            Self::FbmRlDifference { hurst } => {
                hurst_unit(*hurst)?;
                if *hurst == 0.5 {
                    return domain("the difference process vanishes at H = 1/2");
                }
                Ok(())
            }
            Self::GaussianConvolution { hurst, coeffs } => {
                if !(*hurst > 0.0 && hurst.is_finite()) {
                    return domain(format!("convolution index {hurst} must be positive"));
                }
                if coeffs.iter().any(|a| !a.is_finite()) {
                    return domain("convolution coefficients must be finite");
                }
                Ok(())
            }
            Self::StableScaledFbm { hurst, alpha } => {
                hurst_unit(*hurst)?;
                if !(*alpha > 0.0 && *alpha < 2.0) {
                    return domain(format!("stable index {alpha} must lie in (0, 2)"));
                }
                Ok(())
            }
        }
    }

    pub fn is_stable(&self) -> bool {
        matches!(self, Self::StableScaledFbm { .. })
    }

    /// Hölder-type regularity of paths, capped at 1.
    pub fn regularity(&self) -> f64 {
        match self {
            Self::BrownianMotion => 0.5,
            Self::FractionalBm { hurst } | Self::StableScaledFbm { hurst, .. } => *hurst,
            Self::RiemannLiouville { hurst } | Self::GaussianConvolution { hurst, .. } => hurst.min(1.0),
            Self::Integrated { .. } | Self::FracIntegrated { .. } | Self::FbmRlDifference { .. } => match self {
                Self::Integrated { base, m } => (base.regularity() + *m as f64).min(1.0),
                Self::FracIntegrated { base, order } => (base.regularity() + order).min(1.0),
                _ => 1.0,
            },
        }
    }

    /// Scale of the Brownian component that dominates small-scale oscillation,
    /// when the process locally behaves like a multiple of Brownian motion.
    ///
    /// For the stable-scaled family the per-path factor `A^{1/2}` multiplies this.
    pub fn local_brownian_scale(&self) -> Option<f64> {
        match self {
            Self::BrownianMotion => Some(1.0),
            Self::FractionalBm { hurst } | Self::StableScaledFbm { hurst, .. } if *hurst == 0.5 => Some(1.0),
            Self::RiemannLiouville { hurst } | Self::GaussianConvolution { hurst, .. } if *hurst == 0.5 => Some(1.0),
            _ => None,
        }
    }
}

/// `c_H^2` such that `c_H B^H` and the moving-average representation share a driver.
pub fn fbm_rl_constant_sq(h: f64) -> f64 {
    gamma(h + 0.5).powi(2) / (gamma(2.0 * h + 1.0) * (PI * h).sin())
}

fn fbm_cov(h: f64, s: f64, t: f64) -> f64 {
    let a = 2.0 * h;
    0.5 * (s.powf(a) + t.powf(a) - (t - s).abs().powf(a))
}

/// `∫_0^{s∧t} (s-u)^{a} (t-u)^{b} du`.
fn rl_cross(a: f64, b: f64, s: f64, t: f64) -> f64 {
    if s <= t {
        power_integral(a, b, t - s, s)
    } else {
        power_integral(b, a, s - t, t)
    }
}

/// m-fold integrated fBM covariance in closed form.
fn fbm_integrated_cov(h: f64, m: u32, s: f64, t: f64) -> f64 {
    let alpha = 2.0 * h;
    let mf = m as f64;
    let fact = |k: u32| (1..=k).map(|i| i as f64).product::<f64>();
    // G_k(x) = sgn(x)^k |x|^{α+k} / Π_{i=1..k} (α+i)
    let g = |k: u32, x: f64| {
        if x == 0.0 {
            return 0.0;
        }
        let denom: f64 = (1..=k).map(|i| alpha + i as f64).product();
        let sign = if x < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
        sign * x.abs().powf(alpha + k as f64) / denom
    };
    let lead = 0.5 * gamma(alpha + 1.0) / (gamma(alpha + mf + 1.0) * fact(m))
        * (s.powf(alpha + mf) * t.powi(m as i32) + t.powf(alpha + mf) * s.powi(m as i32));
    let mut j = g(2 * m, t - s);
    let mut sign = 1.0;
    for i in 0..m {
        j -= sign * g(2 * m - i, t) * s.powi(i as i32) / fact(i);
        j -= g(2 * m - i, -s) * t.powi(i as i32) / fact(i);
        sign = -sign;
    }
    if m % 2 == 1 {
        j = -j;
    }
    lead - 0.5 * j
}

#[derive(Debug, Clone)]
enum Repr {
    /// `Σ c_i ∫_0^t (t-u)^{h_i - 1/2} dB(u)`.
    Rl(Vec<(f64, f64)>),
    Fbm(f64),
    FbmIntegrated {
        h: f64,
        m: u32,
    },
    FbmRlDiff {
        h: f64,
        c2: f64,
    },
    /// Γ-normalized fractional integral of order `order` applied to `base`.
    Generic {
        base: Box<Repr>,
        order: f64,
    },
}

impl Repr {
    fn build(spec: &ProcessSpec) -> Result<Self> {
        Ok(match spec {
            ProcessSpec::BrownianMotion => Repr::Rl(vec![(1.0, 0.5)]),
            ProcessSpec::FractionalBm { hurst } if *hurst == 0.5 => Repr::Rl(vec![(1.0, 0.5)]),
            ProcessSpec::FractionalBm { hurst } => Repr::Fbm(*hurst),
            ProcessSpec::RiemannLiouville { hurst } => Repr::Rl(vec![(1.0, *hurst)]),
            ProcessSpec::GaussianConvolution { hurst, coeffs } => {
                let mut terms = vec![(1.0, *hurst)];
                terms.extend(coeffs.iter().enumerate().map(|(n, &a)| (a, hurst + (n + 1) as f64)));
                Repr::Rl(terms)
            }
            ProcessSpec::FbmRlDifference { hurst } => Repr::FbmRlDiff { h: *hurst, c2: fbm_rl_constant_sq(*hurst) },
            ProcessSpec::Integrated { base, m } => match Repr::build(base)? {
                Repr::Rl(terms) => Repr::Rl(shift_rl(&terms, *m as f64)),
                Repr::Fbm(h) => Repr::FbmIntegrated { h, m: *m },
                Repr::FbmIntegrated { h, m: k } => Repr::FbmIntegrated { h, m: k + m },
                other => Repr::Generic { base: Box::new(other), order: *m as f64 },
            },
            ProcessSpec::FracIntegrated { base, order } => match Repr::build(base)? {
                Repr::Rl(terms) => Repr::Rl(shift_rl(&terms, *order)),
                other => Repr::Generic { base: Box::new(other), order: *order },
            },
            ProcessSpec::StableScaledFbm { .. } => {
                return Err(Error::Unsupported(
                    "stable-scaled fBM is only conditionally Gaussian and has no covariance here".into(),
                ))
            }
        })
    }

    fn eval(&self, s: f64, t: f64) -> f64 {
        if s == 0.0 || t == 0.0 {
            return 0.0;
        }
        match self {
            Repr::Rl(terms) => {
                let mut acc = 0.0;
                for (i, &(ci, hi)) in terms.iter().enumerate() {
                    for (j, &(cj, hj)) in terms.iter().enumerate() {
                        if j < i {
                            continue;
                        }
                        let v = if i == j {
                            rl_cross(hi - 0.5, hi - 0.5, s, t)
                        } else {
                            rl_cross(hi - 0.5, hj - 0.5, s, t) + rl_cross(hj - 0.5, hi - 0.5, s, t)
                        };
                        acc += ci * cj * v;
                    }
                }
                acc
            }
            Repr::Fbm(h) => fbm_cov(*h, s, t),
            Repr::FbmIntegrated { h, m } => fbm_integrated_cov(*h, *m, s, t),
            Repr::FbmRlDiff { h, c2 } => c2 * fbm_cov(*h, s, t) - rl_cross(h - 0.5, h - 0.5, s, t),
            Repr::Generic { base, order } => generic_cov(base, *order, s, t),
        }
    }
}

fn shift_rl(terms: &[(f64, f64)], order: f64) -> Vec<(f64, f64)> {
    terms.iter().map(|&(c, h)| (c * gamma(h + 0.5) / gamma(h + 0.5 + order), h + order)).collect()
}

const GEN_DEG: usize = 8;
const GEN_LEVELS: i32 = 10;

/// Nodes and weights for `∫_a^b (c-x)^{γ} f(x) dx` with panels shrinking geometrically
/// toward both ends, so algebraic behavior of `f` at either end is resolved. With
/// `exact_end` the last panel (where `c = b`) carries the weight through a Jacobi rule.
fn graded(a: f64, b: f64, c: f64, gamma_exp: f64, exact_end: bool, out: &mut Vec<(f64, f64)>) {
    let len = b - a;
    if len <= 0.0 {
        return;
    }
    let leg = legendre01(GEN_DEG);
    let mut edges = vec![a];
    for k in (1..=GEN_LEVELS).rev() {
        edges.push(a + 0.5 * len * 0.5f64.powi(k));
    }
    for k in 0..=GEN_LEVELS {
        edges.push(b - 0.5 * len * 0.5f64.powi(k));
    }
    edges.push(b);
    edges.dedup();
    let last = edges.len() - 2;
    for (p, w) in edges.windows(2).enumerate() {
        let (lo, hi) = (w[0], w[1]);
        let h = hi - lo;
        if h <= 0.0 {
            continue;
        }
        if exact_end && p == last {
            let jac = jacobi01(GEN_DEG, gamma_exp, 0.0);
            let scale = h.powf(gamma_exp + 1.0);
            out.extend(jac.iter().map(|&(x, wt)| (lo + h * x, scale * wt)));
        } else {
            out.extend(leg.iter().map(|&(x, wt)| {
                let v = lo + h * x;
                (v, h * wt * (c - v).powf(gamma_exp))
            }));
        }
    }
}

/// `Γ(M)^{-2} ∫_0^s ∫_0^t (s-u)^{M-1} (t-v)^{M-1} R(u, v) dv du`, split where the base
/// kernel has its diagonal kink.
fn generic_cov(base: &Repr, order: f64, s: f64, t: f64) -> f64 {
    // a fixed argument order keeps the rule, and so the value, symmetric
    let (s, t) = (s.min(t), s.max(t));
    let ge = order - 1.0;
    let mut outer = Vec::new();
    graded(0.0, s, s, ge, true, &mut outer);
    let mut inner = Vec::new();
    let mut acc = 0.0;
    for &(u, wu) in &outer {
        inner.clear();
        if u < t {
            graded(0.0, u, t, ge, false, &mut inner);
            graded(u, t, t, ge, true, &mut inner);
        } else {
            graded(0.0, t, t, ge, true, &mut inner);
        }
        let row: f64 = inner.iter().map(|&(v, wv)| wv * base.eval(u, v)).sum();
        acc += wu * row;
    }
    acc / gamma(order).powi(2)
}

/// Covariance kernel of a Gaussian spec, prepared once for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Covariance {
    repr: Repr,
}

impl Covariance {
    pub fn new(spec: &ProcessSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { repr: Repr::build(spec)? })
    }

    pub fn eval(&self, s: f64, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) || !(0.0..=1.0).contains(&t) {
            return domain(format!("times ({s}, {t}) must lie in [0, 1]"));
        }
        Ok(self.repr.eval(s, t))
    }

    /// Symmetric matrix of kernel values at the given points, row-major.
    pub fn matrix_at(&self, pts: &[f64]) -> Vec<f64> {
        let n = pts.len();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.repr.eval(pts[i], pts[j]);
                m[i * n + j] = v;
                m[j * n + i] = v;
            }
        }
        m
    }
}

/// `E X(s) X(t)`.
pub fn covariance(spec: &ProcessSpec, s: f64, t: f64) -> Result<f64> {
    Covariance::new(spec)?.eval(s, t)
}

/// Covariances on the grid points `t_1..=t_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    pub grid: Grid,
    /// Row-major `n × n`.
    pub data: Vec<f64>,
}

impl CovMatrix {
    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.grid.n() + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n()).map(|i| self.get(i, i)).sum()
    }
}

pub fn build_cov(spec: &ProcessSpec, grid: Grid) -> Result<CovMatrix> {
    let cov = Covariance::new(spec)?;
    Ok(CovMatrix { grid, data: cov.matrix_at(&grid.interior()) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm() -> ProcessSpec {
        ProcessSpec::BrownianMotion
    }

    #[test]
    fn brownian_min() {
        assert_eq!(covariance(&bm(), 0.3, 0.5).unwrap(), 0.3);
        let c = build_cov(&bm(), Grid::new(4).unwrap()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((c.get(i, j) - (i.min(j) + 1) as f64 / 4.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(covariance(&bm(), -0.1, 0.5), Err(Error::Domain(_))));
        assert!(matches!(covariance(&bm(), 0.1, 1.5), Err(Error::Domain(_))));
        let st = ProcessSpec::StableScaledFbm { hurst: 0.5, alpha: 1.0 };
        assert!(matches!(covariance(&st, 0.1, 0.5), Err(Error::Unsupported(_))));
        assert!(ProcessSpec::FractionalBm { hurst: 1.0 }.validate().is_err());
        assert!(ProcessSpec::FbmRlDifference { hurst: 0.5 }.validate().is_err());
        assert!(ProcessSpec::StableScaledFbm { hurst: 0.5, alpha: 2.0 }.validate().is_err());
        assert!(ProcessSpec::integrated(bm(), 0).validate().is_err());
        assert!(ProcessSpec::integrated(st, 1).validate().is_err());
    }

    #[test]
    fn fbm_half_is_brownian() {
        let f = ProcessSpec::FractionalBm { hurst: 0.5 };
        for &(s, t) in &[(0.1, 0.9), (0.5, 0.2), (0.7, 0.7)] {
            assert!((covariance(&f, s, t).unwrap() - f64::min(s, t)).abs() < 1e-15);
        }
    }

    #[test]
    fn integrated_brownian_closed_form() {
        let spec = ProcessSpec::integrated(bm(), 1);
        for &(s, t) in &[(0.3, 0.8), (0.8, 0.3), (0.5, 0.5), (1.0, 0.01)] {
            let (a, b) = (f64::min(s, t), f64::max(s, t));
            let want = b * a * a / 2.0 - a.powi(3) / 6.0;
            assert!((covariance(&spec, s, t).unwrap() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn integrated_fbm_m1_at_half_matches_brownian() {
        // exercises the closed form rather than the RL route
        let spec = Repr::FbmIntegrated { h: 0.5, m: 1 };
        let s: f64 = 0.4;
        let t = 0.9;
        let want = t * s * s / 2.0 - s.powi(3) / 6.0;
        assert!((spec.eval(s, t) - want).abs() < 1e-14);
        assert!((spec.eval(t, s) - want).abs() < 1e-14);
    }

    #[test]
    fn integrated_fbm_closed_form_matches_generic() {
        for &h in &[0.3, 0.7] {
            for m in 1..=2u32 {
                let closed = Repr::FbmIntegrated { h, m };
                let generic = Repr::Generic { base: Box::new(Repr::Fbm(h)), order: m as f64 };
                for &(s, t) in &[(0.3, 0.8), (0.9, 0.2), (0.6, 0.6), (1.0, 1.0)] {
                    let a = closed.eval(s, t);
                    let b = generic.eval(s, t);
                    assert!((a - b).abs() < 1e-7, "h={h} m={m} ({s},{t}): {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn difference_kernel_is_small_but_positive() {
        let spec = ProcessSpec::FbmRlDifference { hurst: 0.7 };
        let v = covariance(&spec, 1.0, 1.0).unwrap();
        assert!(v > 0.0 && v < 1.0, "{v}");
    }
}
