//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported lasso shape: {0}")]
    LassoShape(String),
    #[error("symbol {0} is not in the automaton's alphabet")]
    UnknownSymbol(String),
    #[error("unknown atom `{0}`")]
    UnknownAtom(String),
    #[error("invalid automaton: {0}")]
    Invalid(String),
    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("undecided sign for {0}")]
    Undecided(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("syntax error at column {col}: {msg}")]
    Syntax { col: usize, msg: String },
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
