use thiserror::Error;

use crate::optimizer::Synthesis;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("evaluation point lies {distance:e} m from a filament centerline")]
    DegeneratePoint { distance: f64 },

    #[error(
        "no wire depth in [{min_depth:e}, {max_depth:e}] m yields a Zeeman shift of {target:e} Hz"
    )]
    NoSolution {
        target: f64,
        min_depth: f64,
        max_depth: f64,
    },

    #[error("crosstalk bound undefined at zero detuning")]
    ZeroDetuning,

    /// Carries the best pulse reached before the line search gave up.
    #[error("no descent step accepted after {attempts} consecutive line-search attempts")]
    Diverged {
        attempts: usize,
        best: Box<Synthesis>,
    },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
