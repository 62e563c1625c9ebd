use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    /// A configuration value failed validation. `key` is the dotted path of the
    /// offending field.
    #[error("invalid configuration at `{key}`: {message}")]
    InvalidConfiguration { key: String, message: String },

    #[error("optimizer failed to converge after {iterations} iterations (residual {residual:e})")]
    OptimizerFailure { iterations: usize, residual: f64 },

    #[error("malformed input at {location}: {message}")]
    MalformedInput { location: String, message: String },

    #[error("invalid label {label} at {location}: expected a class in [0, {classes})")]
    InvalidLabel {
        label: i64,
        classes: usize,
        location: String,
    },

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("numeric error at step {step}: {message}")]
    Numeric { step: usize, message: String },

    #[error("invalid comparison: {0}")]
    InvalidComparison(String),

    #[error("invariant violated at step {step}: {message}")]
    InvariantViolation { step: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfiguration {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Short machine-readable tag for the error category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::UnsupportedDomain(_) => "unsupported-domain",
            Error::InvalidConfiguration { .. } => "invalid-configuration",
            Error::OptimizerFailure { .. } => "optimizer-failure",
            Error::MalformedInput { .. } => "malformed-input",
            Error::InvalidLabel { .. } => "invalid-label",
            Error::ProtocolViolation(_) => "protocol-violation",
            Error::Numeric { .. } => "numeric-error",
            Error::InvalidComparison(_) => "invalid-comparison",
            Error::InvariantViolation { .. } => "invariant-violation",
            Error::Io { .. } => "io-error",
        }
    }
}
