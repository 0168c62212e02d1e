use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} is {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("block must contain at least one node")]
    EmptyBlock,

    #[error("invalid node index {index} for order {order}")]
    InvalidIndex { index: usize, order: usize },

    #[error("graphs do not differ by exactly one edge")]
    NotNeighborGraphs,

    #[error("{what} too large: {value} (limit {limit})")]
    TooLarge { what: &'static str, value: usize, limit: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("PD-completion did not converge after {sweeps} sweeps (residual {residual:e})")]
    NotConverged { sweeps: usize, residual: f64 },

    #[error("matrix has a nonzero entry at ({row}, {col}) outside the graph pattern")]
    NotInPG { row: usize, col: usize },

    #[error("block size {size} invalid for order {order} (need 2 <= size <= order)")]
    BadBlockSize { size: usize, order: usize },

    #[error("cached chain state drifted by {drift:e} at iteration {iter}")]
    CacheDrift { iter: u64, drift: f64 },

    #[error("no samples after burn-in")]
    NoSamples,

    #[error("parse error at row {row}, column {col}: {token:?}")]
    Parse { row: usize, col: usize, token: String },

    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },

    #[error("cannot select {k} of {p} columns")]
    BadK { k: usize, p: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
