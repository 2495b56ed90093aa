use thiserror::Error;

/// Errors raised by the ccsl library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum CcslError {
    #[error("panel has no subjects")]
    EmptyPanel,

    #[error("subject {subject} (index {index}) has {found} variables, expected {expected}")]
    DimensionMismatch {
        subject: String,
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("subject {subject} has a non-finite value at row {row}, column {column}")]
    NonFinite {
        subject: String,
        row: usize,
        column: usize,
    },

    #[error("subject {subject} has {length} time steps, at least {required} are required")]
    SeriesTooShort {
        subject: String,
        length: usize,
        required: usize,
    },

    #[error("(I - B) is singular")]
    SingularSystem,

    #[error("lag dynamics remain unstable (spectral radius {radius:.4})")]
    Unstable { radius: f64 },

    #[error("every Monte-Carlo draw produced a singular (I - B)")]
    AllSamplesSingular,

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {required} items, got {found}")]
    TooFewItems { required: usize, found: usize },

    #[error("truth labels contain a single class")]
    DegenerateTruth,

    #[error("cluster state invariant violated: {0}")]
    InvalidState(String),
}

pub type Result<T> = std::result::Result<T, CcslError>;
