use std::path::{Path, PathBuf};

use thiserror::Error;

/// CLI failures, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file exists but its contents cannot be used.
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("solver failed: {0}")]
    Solver(lrad_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Io { .. } | Self::Format { .. } => 3,
            Self::Solver(_) => 4,
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, msg: impl Into<String>) -> Self {
        Self::Format {
            path: path.to_path_buf(),
            msg: msg.into(),
        }
    }
}

impl From<lrad_core::Error> for CliError {
    /// Parameter and shape problems are the caller's to fix; everything else
    /// is a numerical failure.
    fn from(e: lrad_core::Error) -> Self {
        use lrad_core::Error as E;
        match e {
            E::InvalidParameter(_) | E::DimensionMismatch { .. } | E::InsufficientRank { .. } | E::Degenerate(_) => {
                Self::Validation(e.to_string())
            }
            other => Self::Solver(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
