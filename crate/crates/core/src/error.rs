use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("reaction-diffusion instability at step {step}: |cell| = {value}")]
    Instability { step: usize, value: f64 },

    #[error("training instability at epoch {epoch}, batch {batch}: {detail}")]
    TrainingInstability {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("mining error: {0}")]
    Mining(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}:{column}: parse error: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, err: &serde_json::Error) -> Self {
        Error::Parse {
            path: path.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    /// Process exit status: 2 usage/config, 3 data, 4 numerical instability.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Instability { .. } | Error::TrainingInstability { .. } => 4,
            _ => 3,
        }
    }
}
