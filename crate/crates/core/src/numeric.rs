//! Quadrature rules, one-dimensional search and a few special functions.

use std::collections::HashMap;
use std::f64::consts::{PI, SQRT_2};
use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex, OnceLock};

use gauss_quad::{FiniteAboveNegOneF64, GaussJacobi, GaussLegendre};
use statrs::function::erf::erfc;

pub(crate) type Rule = Arc<Vec<(f64, f64)>>;

type RuleKey = (usize, u64, u64);

fn rule_cache() -> &'static Mutex<HashMap<RuleKey, Rule>> {
    static CACHE: OnceLock<Mutex<HashMap<RuleKey, Rule>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss–Legendre nodes and weights on [0, 1].
pub(crate) fn legendre01(deg: usize) -> Rule {
    jacobi01(deg, 0.0, 0.0)
}

/// Gauss–Jacobi rule on [0, 1] for the weight `(1-x)^a x^b`.
pub(crate) fn jacobi01(deg: usize, a: f64, b: f64) -> Rule {
    let key = (deg, a.to_bits(), b.to_bits());
    if let Some(r) = rule_cache().lock().unwrap().get(&key) {
        return r.clone();
    }
    let deg_nz = NonZeroUsize::new(deg).expect("quadrature degree must be positive");
    let pairs: Vec<(f64, f64)> = if a == 0.0 && b == 0.0 {
        GaussLegendre::new(deg_nz).as_node_weight_pairs().iter().map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect()
    } else {
        let fa = FiniteAboveNegOneF64::new(a).expect("jacobi exponent above -1");
        let fb = FiniteAboveNegOneF64::new(b).expect("jacobi exponent above -1");
        let scale = 2f64.powf(a + b + 1.0);
        GaussJacobi::new(deg_nz, fa, fb)
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), w / scale))
            .collect()
    };
    let rule = Arc::new(pairs);
    rule_cache().lock().unwrap().insert(key, rule.clone());
    rule
}

const PIECE_DEG: usize = 12;

/// `∫_0^L v^p (d+v)^q dv` for `p, q > -1`, `d ≥ 0`.
///
/// The first piece `[0, min(d, L)]` absorbs `v^p` into a Jacobi weight; the rest is
/// split geometrically so each Legendre panel sits at least its own length away from
/// both singular points.
pub(crate) fn power_integral(p: f64, q: f64, d: f64, len: f64) -> f64 {
    if len <= 0.0 {
        return 0.0;
    }
    if d == 0.0 {
        return len.powf(p + q + 1.0) / (p + q + 1.0);
    }
    if q == 0.0 {
        return len.powf(p + 1.0) / (p + 1.0);
    }
    if q.fract() == 0.0 && q > 0.0 && q <= 8.0 {
        // Binomial expansion is exact and cheap for small integer q.
        let qi = q as i32;
        let mut acc = 0.0;
        let mut binom = 1.0;
        for j in 0..=qi {
            acc += binom * d.powi(qi - j) * len.powf(p + j as f64 + 1.0) / (p + j as f64 + 1.0);
            binom = binom * (qi - j) as f64 / (j + 1) as f64;
        }
        return acc;
    }
    let first = d.min(len);
    let jac = jacobi01(PIECE_DEG, 0.0, p);
    let mut total = first.powf(p + 1.0) * jac.iter().map(|&(x, w)| w * (d + first * x).powf(q)).sum::<f64>();
    let leg = legendre01(PIECE_DEG);
    let mut a = first;
    while a < len {
        let b = (2.0 * a).min(len);
        let h = b - a;
        total += h * leg
            .iter()
            .map(|&(x, w)| {
                let v = a + h * x;
                w * v.powf(p) * (d + v).powf(q)
            })
            .sum::<f64>();
        a = b;
    }
    total
}

/// Golden-section minimization of `f` on `[a, b]`, assuming unimodality.
pub(crate) fn golden_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol * (1.0 + c.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Scans `n` log-spaced points of `[lo, hi]` then refines the best bracket.
pub(crate) fn scan_then_golden(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let (ll, lh) = (lo.ln(), hi.ln());
    let xs: Vec<f64> = (0..n).map(|i| (ll + (lh - ll) * i as f64 / (n - 1) as f64).exp()).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let best = vals
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let a = xs[best.saturating_sub(1)];
    let b = xs[(best + 1).min(n - 1)];
    golden_min(f, a, b, 1e-12)
}

/// Bisection root of a monotone function with `f(a)` and `f(b)` of opposite sign.
pub(crate) fn bisect(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let mut fa = f(a);
    for _ in 0..iters {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = f(m);
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

pub(crate) fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub(crate) fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `Φ(w)/φ(w)`, accurate far into the lower tail.
pub(crate) fn mills_lower(w: f64) -> f64 {
    if w > -5.0 {
        return norm_cdf(w) / norm_pdf(w);
    }
    // Continued fraction for the upper-tail ratio at a = -w.
    let a = -w;
    let mut frac = 0.0;
    for k in (1..=80).rev() {
        frac = k as f64 / (a + frac);
    }
    1.0 / (a + frac)
}

/// Least squares fit `y ≈ c0 + c1 x` with weights; returns `(c0, c1)`.
pub(crate) fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..x.len() {
        sxx += w[i] * (x[i] - mx) * (x[i] - mx);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
    }
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}
