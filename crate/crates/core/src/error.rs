use thiserror::Error;

/// Errors raised anywhere in the stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("descriptor infeasible: {0}")]
    Infeasible(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error("accumulator overflow in layer {layer}")]
    Overflow { layer: usize },
    #[error("persistence failure: {0}")]
    Persistence(String),
    #[error("checksum mismatch: {0}")]
    Checksum(String),
    #[error("unsupported format version: expected {expected}, found {found}")]
    Version { expected: u16, found: u16 },
    #[error("format error: {0}")]
    Format(String),
    #[error("undefined result: {0}")]
    Undefined(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short stable identifier, used for machine-parsable CLI output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Numeric(_) => "numeric",
            Error::Validation(_) => "validation",
            Error::Infeasible(_) => "infeasible",
            Error::Divergence { .. } => "divergence",
            Error::Overflow { .. } => "overflow",
            Error::Persistence(_) => "persistence",
            Error::Checksum(_) => "checksum",
            Error::Version { .. } => "version",
            Error::Format(_) => "format",
            Error::Undefined(_) => "undefined",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}

pub(crate) fn validation_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
