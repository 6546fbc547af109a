use std::path::PathBuf;

use kelly_core::KellyError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Kelly(#[from] KellyError),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    /// A file parsed but its contents are malformed.
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 0 success, 1 input, 2 capacity, 3 convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Kelly(e) => match e.root() {
                KellyError::Capacity { .. } => 2,
                KellyError::NonConvergence { .. } | KellyError::Quadrature { .. } => 3,
                _ => 1,
            },
            _ => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl std::fmt::Display) -> CliError {
        CliError::Format { path: path.into(), msg: msg.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
