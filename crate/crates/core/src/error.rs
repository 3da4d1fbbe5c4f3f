use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the analysis pipeline.
///
/// `Clone` so that per-hypothesis failures can be cached and reported.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("rules {0} and {1} agree on every pair")]
    IdenticalRules(usize, usize),
    #[error("rule index {index} out of range (sample has {count} rules)")]
    InvalidRule { index: usize, count: usize },
    #[error("gamma must be finite and >= 1, got {0}")]
    InvalidGamma(f64),
    #[error("kappa must lie in [0, 1), got {0}")]
    InvalidKappa(f64),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("delta must be finite and >= 0, got {0}")]
    InvalidDelta(f64),
    #[error("need at least {needed} pairs, got {got}")]
    TooFewPairs { needed: usize, got: usize },
    #[error("standard error is zero")]
    DegenerateVariance,
    #[error("mean absolute difference is zero")]
    ZeroDenominator,
    #[error("amplification needs lambda > gamma > 1 (gamma = {gamma}, lambda = {lambda})")]
    InvalidAmplification { gamma: f64, lambda: f64 },
    #[error("split fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("order relation has a cycle through rule {0}")]
    CycleDetected(usize),
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("validation error at row {row}: {message}")]
    Validation { row: usize, message: String },
    #[error("no matched pairs could be formed")]
    NoMatches,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    /// Whether the error comes from user-supplied input rather than a fault in the tool.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
