use thiserror::Error;

/// Errors produced by the library.
///
/// Row and line numbers in messages are 1-based so they can be matched
/// against the input file directly.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("dimension mismatch at row {row}: expected {expected} goods, found {found}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-positive price at row {row}")]
    NonPositivePrice { row: usize },

    #[error("negative quantity at row {row}")]
    NegativeQuantity { row: usize },

    #[error("zero expenditure at row {row}")]
    ZeroExpenditure { row: usize },

    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },

    #[error("efficiency level {0} outside [0, 1]")]
    EfficiencyOutOfRange(f64),

    #[error("operation requires {expected} goods, dataset has {found}")]
    WrongGoodsCount { expected: usize, found: usize },

    #[error("search budget of {cap} nodes exhausted")]
    SearchBudgetExceeded { cap: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        Error::Parse {
            line,
            message: err.to_string(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
