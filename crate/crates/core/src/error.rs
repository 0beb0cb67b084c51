use alloc::string::String;

/// Errors raised by the core crate. Every variant is a validation failure of
/// caller-supplied data or configuration.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },

    #[error("probability vector sums to {sum}, expected 1 within {tolerance}")]
    ProbabilitySum { sum: f64, tolerance: f64 },

    #[error("negative probability {value} at position {index}")]
    NegativeProbability { index: usize, value: f64 },

    #[error("positive log-probability {value} at position {index}")]
    PositiveLogProb { index: usize, value: f64 },

    #[error("detector `{detector}` needs {expected} payloads, found {found}")]
    KindMismatch {
        detector: &'static str,
        expected: &'static str,
        found: &'static str,
    },

    #[error("unknown class `{0}`")]
    UnknownClass(String),

    #[error("example `{0}` has no class label")]
    Unlabeled(String),

    #[error("filler supplies {available} words, {requested} requested")]
    FillerTooShort { available: usize, requested: usize },

    #[error("vocabulary is empty after min-count filtering")]
    EmptyVocabulary,
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
