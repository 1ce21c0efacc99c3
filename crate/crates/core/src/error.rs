use thiserror::Error;

/// Errors raised anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid material on element {element}: {message}")]
    InvalidMaterial { element: usize, message: String },

    #[error("invalid patch {index}: {message}")]
    InvalidPatch { index: usize, message: String },

    #[error("invalid contrast: {0}")]
    InvalidContrast(String),

    #[error("invalid phantom: {0}")]
    InvalidPhantom(String),

    #[error("incompatible operands: {0}")]
    IncompatibleOperands(String),

    #[error("factorization failed at pivot {pivot} (value {value:e})")]
    FactorizationFailure { pivot: usize, value: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Tags an error with the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage, source: Box::new(e) },
        }
    }

    /// Innermost error, skipping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn is_config(&self) -> bool {
        matches!(self.root(), Error::Config { .. } | Error::InvalidPhantom(_) | Error::Parse(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
