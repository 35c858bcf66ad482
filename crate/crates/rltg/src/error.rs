use thiserror::Error;

/// Crate-wide error type. Variants map to the failure classes of the
/// individual subsystems (shape checks, bad data, bad configuration, ...).
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("training error: {0}")]
    Training(String),

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("weight file error: {0}")]
    Weights(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
