use thiserror::Error;

/// Errors raised by the library.
///
/// Verdicts (true/false answers to an equivalence question) are never errors;
/// an `Err` means the question could not be answered on the given inputs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what}: non-finite entry at ({row}, {col})")]
    NonFinite {
        what: String,
        row: usize,
        col: usize,
    },

    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: String,
        got: String,
    },

    #[error("{what}: numeric rank {found}, expected {expected}")]
    RankDeficient {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("{what} is not symmetric positive definite")]
    NotSpd { what: String },

    #[error("{what} is not symmetric positive semidefinite")]
    NotPsd { what: String },

    #[error("{what} is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { what: String, asymmetry: f64 },

    #[error("invalid input `{what}`: {reason}")]
    InvalidInput { what: String, reason: String },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("unsupported here: {0}")]
    Unsupported(String),

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),
}

impl Error {
    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            what: what.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn dims(
        what: impl Into<String>,
        expected: impl std::fmt::Display,
        got: impl std::fmt::Display,
    ) -> Self {
        Error::DimensionMismatch {
            what: what.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// Stable machine-readable kind, used in CLI error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFinite { .. } => "non-finite",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::RankDeficient { .. } => "rank-deficient",
            Error::NotSpd { what } if what.eq_ignore_ascii_case("omega") => "omega-not-spd",
            Error::NotSpd { .. } => "not-spd",
            Error::NotPsd { .. } => "not-psd",
            Error::NotSymmetric { .. } => "not-symmetric",
            Error::InvalidInput { .. } => "invalid-input",
            Error::Precondition(_) => "precondition",
            Error::Unsupported(_) => "unsupported",
            Error::InternalConsistency(_) => "internal-consistency",
        }
    }

    /// The offending input name, when one is known.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::NonFinite { what, .. }
            | Error::DimensionMismatch { what, .. }
            | Error::RankDeficient { what, .. }
            | Error::NotSpd { what }
            | Error::NotPsd { what }
            | Error::NotSymmetric { what, .. }
            | Error::InvalidInput { what, .. } => Some(what.as_str()),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
