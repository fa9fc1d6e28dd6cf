use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("association vector is all zeros: no observed association with any group")]
    ZeroVector,

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid association vector: {0}")]
    InvalidAssociation(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },

    #[error("word {word:?} appears in both group {first:?} and group {second:?}")]
    Overlap {
        word: String,
        first: String,
        second: String,
    },

    #[error("empty list: {0}")]
    EmptyList(String),

    #[error("at least 2 groups are required, found {0}")]
    Arity(usize),

    #[error("removing {remove} of {len} words would leave the list empty")]
    WouldEmpty { remove: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no word of list {0:?} is in the vocabulary")]
    AllOov(String),

    #[error("zero-norm vector: {0}")]
    ZeroNorm(String),

    #[error("at least 2 distinct labels are required, found {0}")]
    DegenerateLabels(usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("annotation references unknown context {0:?}")]
    UnknownContext(String),

    #[error("constant input: rank variance is zero")]
    ConstantInput,

    #[error("row {row} sums to {found}, expected {expected}")]
    RowSumMismatch { row: usize, expected: usize, found: usize },

    #[error("agreement undefined: all ratings fall into a single category")]
    DegenerateAgreement,

    #[error("missing measurement for {0:?}")]
    MissingMeasurement(String),

    #[error("missing annotations for context length m={0}")]
    MissingAnnotations(usize),

    #[error("insufficient overlap: {found} shared items, at least {required} required")]
    InsufficientOverlap { found: usize, required: usize },

    #[error("power iteration did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("projection removal left a zero vector")]
    ZeroResult,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line: Some(line),
            message: message.into(),
        }
    }

    pub(crate) fn parse_msg(message: impl Into<String>) -> Self {
        Error::Parse {
            line: None,
            message: message.into(),
        }
    }
}
