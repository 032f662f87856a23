use std::path::PathBuf;

use painpaint_core::pipeline::PipelineError;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const BACKEND: i32 = 4;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{path}:{line}: {message}")]
    Format { path: PathBuf, line: usize, message: String },
    #[error("{0}")]
    Data(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), line, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        use painpaint_core::inpaint::InpaintError;
        use painpaint_core::propagation::EstimatorError;
        match self {
            Error::Usage(_) | Error::Config(_) => exit::USAGE,
            Error::Io { .. } | Error::Image { .. } | Error::Format { .. } | Error::Data(_) => exit::DATA,
            Error::Pipeline(p) => match p {
                PipelineError::Config(_) => exit::USAGE,
                PipelineError::Inpaint(
                    InpaintError::Network(_)
                    | InpaintError::Protocol(_)
                    | InpaintError::Timeout
                    | InpaintError::Backend(_)
                    | InpaintError::InvariantViolation { .. }
                    | InpaintError::CountMismatch { .. },
                )
                | PipelineError::Estimator(EstimatorError::Backend(_)) => exit::BACKEND,
                PipelineError::Scene(painpaint_core::scene::SceneError::Backend(_)) => exit::BACKEND,
                _ => exit::DATA,
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
