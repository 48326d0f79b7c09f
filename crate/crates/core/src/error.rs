use std::path::PathBuf;

use mdhr_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("config error: {0}")]
    Config(String),
    #[error("validation error in `{field}`: {msg}")]
    Validation { field: String, msg: String },
    #[error("load error: {0}")]
    Load(String),
    #[error("io error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

impl CoreError {
    pub fn validation(field: impl Into<String>, msg: impl Into<String>) -> Self {
        CoreError::Validation { field: field.into(), msg: msg.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io { path: path.into(), source }
    }

    /// Process exit code for the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            CoreError::Config(_) | CoreError::Validation { .. } | CoreError::Load(_) => 2,
            CoreError::Io { .. } | CoreError::Format { .. } => 3,
            CoreError::Tensor(TensorError::Io(_)) | CoreError::Tensor(TensorError::Format { .. }) => 3,
            CoreError::Numerical(_) | CoreError::Tensor(_) => 1,
        }
    }
}

/// Attaches a path to tensor file errors.
pub(crate) fn at_path(path: &std::path::Path, e: TensorError) -> CoreError {
    match e {
        TensorError::Io(source) => CoreError::io(path, source),
        TensorError::Format { offset, msg } => {
            CoreError::Format { path: path.to_path_buf(), msg: format!("byte {offset}: {msg}") }
        }
        other => CoreError::Tensor(other),
    }
}
