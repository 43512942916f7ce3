//! Graph datasets: in-memory representation, adjacency normalization, the
//! on-disk bundle format, and a stochastic-block-model generator for
//! self-contained benchmarks.

mod bundle;
mod dataset;
mod sbm;

pub use bundle::{load_bundle, save_bundle};
pub use dataset::{normalize_adjacency, GraphDataset, NormalizedAdjacency};
pub use sbm::{generate_sbm, SbmSpec};

use crate::numcore::NumError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("adjacency must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("adjacency is asymmetric at ({i}, {j})")]
    Asymmetric { i: usize, j: usize },
    #[error("adjacency stores a self-loop at node {0}")]
    SelfLoop(usize),
    #[error("node {node}: label {label} outside [0, {classes})")]
    LabelRange { node: usize, label: i64, classes: usize },
    #[error("{set} split: index {index} out of range for {nodes} nodes")]
    SplitRange { set: &'static str, index: usize, nodes: usize },
    #[error("node {0} appears in more than one split")]
    OverlappingSplits(usize),
    #[error("train node {0} has no label")]
    UnlabeledTrain(usize),
    #[error("features row {row}: expected {expected} columns, got {got}")]
    RaggedFeatures { row: usize, expected: usize, got: usize },
    #[error("labels: expected {expected} entries, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error("bundle file {file}: {msg}")]
    Malformed { file: String, msg: String },
    #[error("{0}")]
    BadSpec(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Num(#[from] NumError),
}
