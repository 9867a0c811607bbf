use thiserror::Error;

/// Errors raised anywhere in the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DctError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("backward called on a node that is not part of this graph")]
    NotForwarded,

    #[error("empty sample set")]
    EmptySet,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not symmetric positive definite")]
    NotSpd,

    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("ODE solver exceeded {0} steps")]
    MaxStepsExceeded(usize),

    #[error("pairing policy {policy} is incompatible with the dataset: {detail}")]
    PolicyMismatch { policy: &'static str, detail: String },

    #[error("non-finite loss at step {step}: {value}")]
    NonFiniteLoss { step: usize, value: f64 },

    #[error("conditioning mismatch: {0}")]
    Conditioning(String),

    #[error("missing predictor for the semi-supervised regime")]
    MissingPredictor,

    #[error("io: {0}")]
    Io(String),

    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, DctError>;

impl From<std::io::Error> for DctError {
    fn from(e: std::io::Error) -> Self {
        DctError::Io(e.to_string())
    }
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> DctError {
    DctError::Shape {
        op,
        detail: detail.into(),
    }
}
