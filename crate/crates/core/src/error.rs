use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("sketch has no angular bits")]
    NoAngularBits,
    #[error("sketch has no shifted bits")]
    NoShiftedBits,
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("empty group: no {0} units available")]
    EmptyGroup(&'static str),
    #[error("representation does not fit distance `{0}`")]
    RepresentationMismatch(&'static str),
    #[error("index {index} out of range for pool of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate treatment: {0}")]
    DegenerateTreatment(String),
    #[error("too few samples: need at least {needed}, got {actual}")]
    TooFewSamples { needed: usize, actual: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("malformed file at row {row}, column `{column}`: {message}")]
    MalformedFile {
        row: usize,
        column: String,
        message: String,
    },
    #[error("dataset has no ground-truth column `{0}`")]
    MissingGroundTruth(&'static str),
    #[error("{context}: {source}")]
    Annotated {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn annotate(self, context: impl Into<String>) -> Self {
        Error::Annotated {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping annotation layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Annotated { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
