use thiserror::Error;

/// Errors produced by the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("dimension mismatch in `{field}`: expected {expected}, got {got}")]
    Dimension {
        field: String,
        expected: String,
        got: String,
    },

    #[error("working set is degenerate: {0}")]
    DegenerateWorkingSet(String),

    #[error("sampled quadratic program is infeasible")]
    Infeasible,

    #[error("solver did not converge after {iterations} iterations")]
    Unconverged { iterations: usize },

    #[error(
        "grid too fine: spacing {spacing:e} below floor {floor:e}; increase the tightening factor"
    )]
    GridTooFine { spacing: f64, floor: f64 },

    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
