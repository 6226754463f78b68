use thiserror::Error;

#[derive(Debug, Error)]
pub enum MilpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("simplex iteration limit reached after {0} iterations")]
    IterationLimit(u64),
    #[error("numerical trouble: {0}")]
    Numerical(String),
    #[error("enumeration refused: {count} integer variables exceed the limit of {limit}")]
    TooManyIntegers { count: usize, limit: usize },
    #[error("integer variable {0} has an infinite bound and cannot be enumerated")]
    UnboundedInteger(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("solution file references unknown variable {0:?}")]
    UnknownVariable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
