use thiserror::Error;

/// Errors raised by the measurement models, simulator and estimator.
#[derive(Debug, Error)]
pub enum RioError {
    #[error("invalid configuration: field `{field}` {reason}")]
    Config { field: String, reason: String },

    #[error("missing raw chirp field `{0}`")]
    MissingChirpField(&'static str),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("non-monotone timestamps: {prev} followed by {next}")]
    NonMonotone { prev: f64, next: f64 },

    #[error("rank-deficient normal equations; unconstrained directions: {}", .directions.join(", "))]
    RankDeficient { directions: Vec<String> },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RioError {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        RioError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input rather than I/O or numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            RioError::Config { .. } | RioError::MissingChirpField(_) | RioError::Parse { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, RioError>;
