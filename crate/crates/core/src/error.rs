use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch in {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("odd bit count {0}: QPSK carries two bits per symbol")]
    OddBitCount(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("zero pilot symbol at pilot position {0}")]
    ZeroPilot(usize),
    #[error("channel delay span {span_s:.3e} s exceeds cyclic prefix {cp_s:.3e} s")]
    DelaySpanExceedsCp { span_s: f64, cp_s: f64 },
    #[error("regularized correlation matrix is singular (reciprocal condition {rcond:.3e})")]
    Singular { rcond: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("unknown architecture tag {0:?}")]
    UnknownArch(String),
    #[error("unknown method tag {0:?}")]
    UnknownMethod(String),
    #[error("unknown channel class {0:?}")]
    UnknownClass(String),
    #[error("network bundle has not been trained")]
    Untrained,
    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Config(#[from] toml::de::Error),
}
