use thiserror::Error;

/// Everything that can stop a run, grouped by the exit status it maps to.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] smalldev_core::Error),
    #[error("cannot write artifacts: {0}")]
    Io(#[from] std::io::Error),
    #[error("verification failed: {0}")]
    Verification(String),
}

pub type RunResult<T> = Result<T, RunError>;

impl RunError {
    /// 1 for bad input, 2 for numerical or runtime failure, 3 for a failed check.
    pub fn exit_code(&self) -> u8 {
        use smalldev_core::Error as E;
        match self {
            RunError::Config(_) => 1,
            RunError::Core(E::Domain(_) | E::Unsupported(_)) => 1,
            RunError::Core(_) | RunError::Io(_) => 2,
            RunError::Verification(_) => 3,
        }
    }
}

pub(crate) fn config_err<T>(msg: impl Into<String>) -> RunResult<T> {
    Err(RunError::Config(msg.into()))
}
