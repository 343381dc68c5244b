use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range for depth {depth}")]
    Index { index: usize, depth: usize },

    #[error("non-finite value {value} at {coord:?}")]
    NonFiniteValue { coord: Vec<usize>, value: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("patch side {patch} exceeds map dimensions {height}x{width}")]
    InvalidPatchSize {
        patch: usize,
        height: usize,
        width: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dim(String),

    #[error("k = {k} is invalid for {n} points")]
    InvalidK { k: usize, n: usize },

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("cannot split {k1} feature maps into groups of {n_k}")]
    InvalidGrouping { k1: usize, n_k: usize },

    #[error("training labels contain fewer than two classes")]
    DegenerateLabels,

    #[error("score tables are not aligned: {0}")]
    Alignment(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
