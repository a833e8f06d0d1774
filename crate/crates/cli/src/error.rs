use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("unknown simulation kind {0:?}; expected one of rabi, ramsey, odmr, pulse")]
    UnknownKind(String),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("invalid {path}: {reason}")]
    Validation { path: String, reason: String },

    #[error(transparent)]
    Physics(#[from] spinmux::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn validation(path: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Validation {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 1 usage, 2 validation or physics, 3 optimizer divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::UnknownKind(_) => 1,
            CliError::Physics(spinmux::Error::Diverged { .. }) => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
