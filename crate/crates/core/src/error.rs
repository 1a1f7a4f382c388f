use std::path::PathBuf;
use thiserror::Error;

/// Error type shared by all pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("lookup failed: {0}")]
    Lookup(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("state error: {0}")]
    State(String),
    #[error("did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("training stalled: {0}")]
    TrainingStall(String),
    #[error("bad file format in {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code category: 1 usage/config, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Param(_) => 1,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::EmptyCorpus(_)
            | Error::Data(_)
            | Error::Lookup(_)
            | Error::Degenerate(_)
            | Error::State(_)
            | Error::Format { .. } => 2,
            Error::Convergence { .. } | Error::TrainingStall(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
