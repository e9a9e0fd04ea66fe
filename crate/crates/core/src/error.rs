use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid axis: {0}")]
    InvalidAxis(String),

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("malformed distribution: {0}")]
    MalformedDistribution(String),

    #[error("cloud too small: {found} points, need at least {min}")]
    CloudTooSmall { found: usize, min: usize },

    #[error("refinement failed: {reason}")]
    RefinementFailed {
        reason: String,
        last_valid: Box<crate::refine::RefinedMobility>,
    },

    /// The document is not readable JSON, or could not be produced.
    #[error("{0}")]
    Parse(String),

    #[error("missing field: {0}")]
    MissingField(String),

    /// A field is present but has the wrong shape.
    #[error("{field}: {message}")]
    Schema { field: String, message: String },

    /// Document is well formed but violates an annotation invariant.
    #[error("validation error at {field}: {message}")]
    Validation { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Document location the error refers to, when it names one.
    pub fn field(&self) -> Option<&str> {
        match self {
            Error::MissingField(f) => Some(f),
            Error::Schema { field, .. } | Error::Validation { field, .. } => Some(field),
            _ => None,
        }
    }
}
