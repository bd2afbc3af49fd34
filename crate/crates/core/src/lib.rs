// `!(x > 0.0)` is the NaN-rejecting form of every domain check here
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
mod numeric;
pub mod process;

pub use error::{Error, Result};
pub use grid::{Grid, SamplePath};
pub use process::{build_cov, covariance, CovMatrix, Covariance, ProcessSpec};
pub mod chenli;
pub mod frac_calc;
pub mod mc;
pub mod norms;
pub mod quantize;
pub mod sampling;
pub mod smallball;
pub mod spectral;
