use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty learning data")]
    EmptyData,

    #[error("invalid response")]
    InvalidResponse,

    #[error("empty sample")]
    EmptySample,

    #[error("dimension mismatch: expected {expected} covariates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("variable index {index} out of range for {d} covariates")]
    VariableOutOfRange { index: usize, d: usize },

    #[error("identical pair")]
    IdenticalPair,

    #[error("expected one or two noised variables, got {0}")]
    VarSetSize(usize),

    #[error("missing value for terminal {label}")]
    MissingTerminalValue { label: usize },

    #[error("missing weight for terminal {label}")]
    MissingTerminalWeight { label: usize },

    #[error("no out-of-bag data")]
    NoOutOfBag,

    #[error("empty forest")]
    EmptyForest,

    #[error("degenerate box")]
    DegenerateBox,

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
