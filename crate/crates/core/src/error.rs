use thiserror::Error;

use crate::symmetry::QuantumNumber;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quantum number component count mismatch: {left} vs {right}")]
    ComponentMismatch { left: usize, right: usize },

    #[error("invalid entanglement cut: {0}")]
    InvalidCut(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A structural inconsistency between tables, layouts or operator blocks.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("boundary term {term} maps pair {pair} outside the target sector")]
    NonConserving { term: usize, pair: usize },

    #[error("sector {0} has zero dimension")]
    EmptySector(QuantumNumber),

    #[error("collective aborted: {0}")]
    Collective(#[from] TransportError),

    #[error("dimension {dim} exceeds the oracle cap {cap}")]
    OracleCap { dim: usize, cap: usize },

    #[error("state is not normalized (norm = {norm})")]
    NotNormalized { norm: f64 },

    #[error("Lanczos did not converge in {iterations} iterations (last Ritz value {last_ritz})")]
    NotConverged { iterations: usize, last_ritz: f64 },

    #[error(transparent)]
    Fit(#[from] FitError),

    #[error("state file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    #[error("rank {rank} supplied {got} batches, expected {expected}")]
    BatchCount { rank: usize, got: usize, expected: usize },

    #[error("batch {from}->{to} has length {got}, expected {expected}")]
    BatchLength { from: usize, to: usize, got: usize, expected: usize },

    #[error("rank {rank} holds a {rows}x{cols} block, geometry expects {want_rows}x{want_cols}")]
    Geometry { rank: usize, rows: usize, cols: usize, want_rows: usize, want_cols: usize },

    #[error("reduction operands differ in shape across ranks ({0} vs {1})")]
    Shape(usize, usize),

    #[error("expected contributions from {expected} ranks, got {got}")]
    RankCount { expected: usize, got: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },

    #[error("non-positive value {value} at index {index} in a log-domain fit")]
    NonPositive { index: usize, value: f64 },

    #[error("abscissa is not strictly increasing at index {0}")]
    NonMonotonic(usize),

    #[error("fit window [{lo}, {hi}] contains fewer than two usable points")]
    EmptyWindow { lo: f64, hi: f64 },

    #[error("{0}")]
    Unidentifiable(String),
}
