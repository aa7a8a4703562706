use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("malformed problem: {0}")]
    Dimension(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
    #[error("node limit reached before any integer-feasible point was found")]
    NoIncumbent,
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
