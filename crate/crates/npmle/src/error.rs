use std::path::{Path, PathBuf};

/// Errors from the file-handling layer, each tied to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] npmle_core::Error),
    #[error("cannot read {}: {source}", path.display())]
    Input { path: PathBuf, source: std::io::Error },
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error("{}: {}", path.display(), diagnostics.join("; "))]
    Config { path: PathBuf, diagnostics: Vec<String> },
    #[error("NPMLE did not converge: max D - 1 = {gap:.3e} after {iterations} iterations")]
    NotConverged { gap: f64, iterations: usize },
    #[error("{0}")]
    Internal(String),
}

pub type AppResult<T> = std::result::Result<T, AppError>;

impl AppError {
    pub fn input(path: &Path, source: std::io::Error) -> Self {
        Self::Input { path: path.to_path_buf(), source }
    }

    pub fn output(path: &Path, source: std::io::Error) -> Self {
        Self::Output { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, msg: impl Into<String>) -> Self {
        Self::Format { path: path.to_path_buf(), msg: msg.into() }
    }

    /// 0 ok, 1 internal, 2 non-convergence, 3 estimator undefined, 4 usage.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Core(npmle_core::Error::GoodTuringUndefined) => 3,
            Self::Core(npmle_core::Error::Spec { .. }) => 4,
            Self::Core(_) => 1,
            Self::NotConverged { .. } => 2,
            Self::Input { .. } | Self::Format { .. } | Self::Usage(_) | Self::Config { .. } => 4,
            Self::Output { .. } | Self::Internal(_) => 1,
        }
    }
}
