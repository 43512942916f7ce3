//! Deterministic numeric kernels: dense matrices, CSR sparse matrices, a
//! reverse-mode tape, and the optimizer that consumes its gradients.
//!
//! Every kernel fixes its summation order (matmul accumulates over k in
//! ascending order inside each output row, sparse products walk rows in
//! ascending column order), so repeated runs on the same inputs produce
//! bitwise-identical floats.

mod dense;
mod optim;
mod sparse;
mod tape;

pub use dense::DenseMatrix;
pub use optim::Adam;
pub use sparse::SparseMatrix;
pub use tape::{grad_check, NodeId, SparseId, Tape, Watermark};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("{op}: dimension mismatch {lhs:?} vs {rhs:?}")]
    DimMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("matrix construction: non-finite value at ({row}, {col})")]
    NonFiniteInput { row: usize, col: usize },
    #[error("log: non-positive entry {value} at ({row}, {col})")]
    LogDomain { row: usize, col: usize, value: f64 },
    #[error("backward: root must be 1x1, got {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },
    #[error("optimizer: non-finite gradient for parameter '{param}'")]
    BadGradient { param: String },
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
}
