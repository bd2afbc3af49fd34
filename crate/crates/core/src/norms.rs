//! Path norms and their `(β, p)` classification.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::grid::SamplePath;

/// Norms with a self-similarity index `β` and pseudo-additivity index `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NormSpec {
    /// `p ∈ [1, ∞]`; in JSON, `"inf"` stands for infinity.
    Lp {
        #[serde(serialize_with = "ser_ext", deserialize_with = "de_ext")]
        p: f64,
    },
    Holder {
        eta: f64,
    },
    /// `∫ x²`, the square of the L2 norm.
    L2Squared,
}

pub(crate) fn ser_ext<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
    if p.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*p)
    }
}

pub(crate) fn de_ext<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Ext {
        Num(f64),
        Text(String),
    }
    match Ext::deserialize(d)? {
        Ext::Num(v) => Ok(v),
        Ext::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "Infinity") => Ok(f64::INFINITY),
        Ext::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
    }
}

impl NormSpec {
    pub fn sup() -> Self {
        Self::Lp { p: f64::INFINITY }
    }

    pub fn l2() -> Self {
        Self::Lp { p: 2.0 }
    }

    pub fn validate(&self) -> crate::Result<()> {
        match *self {
            Self::Lp { p } if p >= 1.0 => Ok(()),
            Self::Holder { eta } if eta > 0.0 && eta < 1.0 => Ok(()),
            Self::L2Squared => Ok(()),
            other => crate::error::domain(format!("invalid norm parameters {other:?}")),
        }
    }

    pub fn is_sup(&self) -> bool {
        matches!(self, Self::Lp { p } if p.is_infinite())
    }
}

/// `(β, p)` with `1/∞ = 0`.
///
/// The squared L2 functional is classified with the L2 norm it squares.
pub fn beta_p(norm: &NormSpec) -> (f64, f64) {
    match *norm {
        NormSpec::Lp { p } => (-1.0 / p, p),
        NormSpec::Holder { eta } => (eta, f64::INFINITY),
        NormSpec::L2Squared => (-0.5, 2.0),
    }
}

/// Norm of the path `x_0, x_1, ..., x_n` on the uniform grid.
pub fn eval_values(x0: f64, values: &[f64], norm: &NormSpec) -> f64 {
    let n = values.len();
    let at = |i: usize| if i == 0 { x0 } else { values[i - 1] };
    match *norm {
        NormSpec::Lp { p } if p.is_infinite() => values.iter().fold(x0.abs(), |m, v| m.max(v.abs())),
        NormSpec::Lp { p } => {
            let scale = values.iter().fold(x0.abs(), |m, v| m.max(v.abs()));
            if scale == 0.0 {
                return 0.0;
            }
            let f = |v: f64| (v.abs() / scale).powf(p);
            let mut s = 0.5 * (f(x0) + f(at(n)));
            for v in &values[..n - 1] {
                s += f(*v);
            }
            scale * (s / n as f64).powf(1.0 / p)
        }
        NormSpec::L2Squared => {
            let mut s = 0.5 * (x0 * x0 + at(n) * at(n));
            for v in &values[..n - 1] {
                s += v * v;
            }
            s / n as f64
        }
        NormSpec::Holder { eta } => {
            let h = 1.0 / n as f64;
            let lag_w: Vec<f64> = (0..=n).map(|k| (k as f64 * h).powf(-eta)).collect();
            let mut best = 0.0f64;
            for i in 0..n {
                let xi = at(i);
                for j in i + 1..=n {
                    best = best.max((at(j) - xi).abs() * lag_w[j - i]);
                }
            }
            best
        }
    }
}

/// Norm of a path with its implicit zero at `t_0`.
pub fn eval_norm(path: &SamplePath, norm: &NormSpec) -> f64 {
    eval_values(0.0, &path.values, norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn classification() {
        assert_eq!(beta_p(&NormSpec::l2()), (-0.5, 2.0));
        assert_eq!(beta_p(&NormSpec::sup()), (0.0, f64::INFINITY));
        assert_eq!(beta_p(&NormSpec::Holder { eta: 0.3 }), (0.3, f64::INFINITY));
    }

    #[test]
    fn json_infinity() {
        let n: NormSpec = serde_json::from_str(r#"{"kind":"lp","p":"inf"}"#).unwrap();
        assert!(n.is_sup());
        assert_eq!(serde_json::to_string(&n).unwrap(), r#"{"kind":"lp","p":"inf"}"#);
        let n: NormSpec = serde_json::from_str(r#"{"kind":"lp","p":2}"#).unwrap();
        assert_eq!(n, NormSpec::l2());
        assert!(serde_json::from_str::<NormSpec>(r#"{"kind":"lp","p":"big"}"#).is_err());
    }

    #[test]
    fn constant_including_origin() {
        let vals = vec![2.5; 64];
        for p in [1.0, 2.0, 7.0, f64::INFINITY] {
            assert!((eval_values(-2.5, &vals, &NormSpec::Lp { p }) - 2.5).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_after_origin_converges() {
        let g = Grid::new(4096).unwrap();
        let p = SamplePath::from_fn(g, |_| 3.0).unwrap();
        assert!((eval_norm(&p, &NormSpec::l2()) - 3.0).abs() < 1e-3);
    }

    #[test]
    fn identity_path() {
        let g = Grid::new(1024).unwrap();
        let p = SamplePath::from_fn(g, |t| t).unwrap();
        assert!((eval_norm(&p, &NormSpec::l2()) - 1.0 / 3f64.sqrt()).abs() < 1e-4);
        for eta in [0.1, 0.5, 0.9] {
            let h = eval_norm(&p, &NormSpec::Holder { eta });
            assert!((h - 1.0).abs() < 1e-12, "{eta}: {h}");
        }
    }

    #[test]
    fn squared_is_square() {
        let g = Grid::new(100).unwrap();
        let p = SamplePath::from_fn(g, |t| (3.0 * t).sin()).unwrap();
        let a = eval_norm(&p, &NormSpec::l2());
        assert!((eval_norm(&p, &NormSpec::L2Squared) - a * a).abs() < 1e-14);
    }
}
