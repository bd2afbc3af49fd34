//! Run configuration: one JSON document per run, with a few scalar overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use smalldev_core::norms::NormSpec;
use smalldev_core::smallball::{Method, RateLaw};
use smalldev_core::ProcessSpec;

use crate::error::{config_err, RunResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Simulate,
    Smallball,
    Ratefit,
    Transfer,
    Chenli,
    Eigen,
    Quantize,
    VerifyAll,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().expect("string tag"))
    }
}

/// Unknown fields are rejected; known fields the experiment does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<ProcessSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<NormSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    /// Rate budgets in nats.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budgets: Option<Vec<f64>>,
    /// MC sample count; path count for `simulate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    /// Retained eigenvalues.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    /// Inclusive 1-based index range for eigenvalue decay fits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_range: Option<[usize; 2]>,
    /// `None` fixes θ at 0; use `theta_free` to fit it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_free: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ProcessSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivative_scale: Option<f64>,
    /// Output directory. Left out of the artifact headers so that runs differing only
    /// in destination produce identical files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub n_samples: Option<usize>,
}

impl ExperimentConfig {
    pub fn empty(experiment: Experiment) -> Self {
        Self {
            experiment: Some(experiment),
            seed: None,
            process: None,
            norm: None,
            method: None,
            eps: None,
            lambdas: None,
            budgets: None,
            n_samples: None,
            grid_n: None,
            modes: None,
            fit_range: None,
            theta: None,
            theta_free: None,
            order: None,
            rate: None,
            comparison: None,
            derivative_scale: None,
            out: None,
        }
    }

    pub fn from_json(text: &str) -> RunResult<Self> {
        serde_json::from_str(text).or_else(|e| config_err(format!("{e}")))
    }

    pub fn load(path: &Path) -> RunResult<Self> {
        let text =
            std::fs::read_to_string(path).or_else(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Applies overrides, reconciles the experiment kind and checks the fields every
    /// run needs. Experiment-specific fields are checked when the run starts.
    pub fn resolve(mut self, kind: Experiment, o: &Overrides) -> RunResult<Self> {
        match self.experiment {
            Some(k) if k != kind => {
                return config_err(format!("config is for experiment `{k}` but `{kind}` was requested"))
            }
            _ => self.experiment = Some(kind),
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.out.is_some() {
            self.out = o.out.clone();
        }
        if o.n_samples.is_some() {
            self.n_samples = o.n_samples;
        }
        if self.seed.is_none() {
            return config_err("missing required field `seed`");
        }
        if self.n_samples == Some(0) {
            return config_err("field `n_samples` must be positive");
        }
        Ok(self)
    }

    pub fn kind(&self) -> Experiment {
        self.experiment.expect("resolved config")
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("resolved config")
    }

    /// The config as echoed into artifact headers: compact JSON without `out`.
    pub fn echo(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        serde_json::to_string(&c).expect("config serializes")
    }
}

/// Fetches a field that the current experiment cannot do without.
pub(crate) fn need<'a, T>(field: &'a Option<T>, name: &str, kind: Experiment) -> RunResult<&'a T> {
    match field {
        Some(v) => Ok(v),
        None => config_err(format!("missing required field `{name}` for experiment `{kind}`")),
    }
}
