use thiserror::Error;

/// Failure modes shared by every operation in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// The operation is not defined for this process or norm.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A factorization, root search or iteration did not succeed.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Regression design is too ill-conditioned to separate the parameters.
    #[error("degenerate fit: {0}")]
    FitDegenerate(String),
    /// No entry of a small ball curve had a single hit.
    #[error("empty curve: no entry has a positive probability estimate")]
    EmptyCurve,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
