use thiserror::Error;

/// Errors produced by any module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("node index {index} out of range 1..={n} at line {line}")]
    NodeRange { line: usize, index: i64, n: usize },

    #[error("invalid dyad ({i}, {j}): endpoints must differ")]
    InvalidDyad { i: usize, j: usize },

    #[error("attribute `{0}` not found on network")]
    MissingAttribute(String),

    #[error("{what} supports n <= {max}, got n = {n}")]
    TooLarge {
        what: &'static str,
        n: usize,
        max: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("perfect separation detected (term `{term}`)")]
    Separation { term: String },

    #[error("rank-deficient change statistics (term `{term}`)")]
    RankDeficient { term: String },

    #[error("degenerate simulated statistics: {0}")]
    Degenerate(String),

    #[error("matrix not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("{what} did not converge within {iters} iterations")]
    NonConvergence { what: String, iters: usize },

    #[error("non-finite value in {what} at iteration {iter}")]
    NonFinite { what: String, iter: usize },

    #[error("numerical underflow in {0}")]
    Underflow(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
