use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The linearized model has (numerically) zero gain; no useful update exists.
    #[error("degenerate model: |P|_2 = {norm:e} is below {threshold:e}")]
    DegenerateModel { norm: f64, threshold: f64 },

    #[error("actuation ineffective: output std {output_std:e} never exceeded {required:e} after {doublings} doublings")]
    ActuationIneffective {
        output_std: f64,
        required: f64,
        doublings: usize,
    },

    #[error("plant diverged at sample {sample}: {reason}")]
    Divergence { sample: usize, reason: String },

    #[error("reference generation failed ({0}); try a smaller input variance or cutoff")]
    GenerationFailed(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("parse error in {} at line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code of the command-line tool: 2 for configuration and
    /// input problems, 3 for plant divergence, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) | Error::NotFound(_) | Error::Parse { .. } | Error::Io(_) => 2,
            Error::Divergence { .. } | Error::GenerationFailed(_) => 3,
            Error::Numerical(_) | Error::DegenerateModel { .. } | Error::ActuationIneffective { .. } => 4,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
