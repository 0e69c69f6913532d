use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate truncation: base distribution has zero mass below {upper}")]
    DegenerateTruncation { upper: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no threshold found: {0}")]
    NoThresholdFound(String),

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("optimizer did not converge: {0}")]
    NonConvergence(String),

    #[error("threshold mismatch: bulk fitted at {bulk}, tail fitted at {tail}")]
    ThresholdMismatch { bulk: f64, tail: f64 },

    #[error("quantile resolution: {0}")]
    Resolution(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::DegenerateTruncation { .. } => "degenerate_truncation",
            Error::InsufficientData(_) => "insufficient_data",
            Error::NoThresholdFound(_) => "no_threshold_found",
            Error::EstimationFailed(_) => "estimation_failed",
            Error::NonConvergence(_) => "non_convergence",
            Error::ThresholdMismatch { .. } => "threshold_mismatch",
            Error::Resolution(_) => "resolution",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Config(_) => "config",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
