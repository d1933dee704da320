use thiserror::Error;

use crate::layout::Region;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("region {0} is a single cell and cannot be split")]
    DegenerateRegion(Region),
    #[error("node {0} does not exist in this layout")]
    UnknownNode(usize),
    #[error("node {0} is not a leaf")]
    NotALeaf(usize),
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("evaluation budget exhausted ({used}/{cap} simulations used)")]
    BudgetExhausted { used: usize, cap: usize },
    #[error("insufficient data: need at least {needed} records, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least {needed} items, found {found}")]
    TooFewItems { needed: usize, found: usize },
    #[error("candidate pool exhausted: requested {requested}, found {available}")]
    PoolExhausted { requested: usize, available: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("inconsistent persisted state: {0}")]
    Inconsistent(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
