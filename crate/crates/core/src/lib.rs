//! Two-view graph learning for semi-supervised node classification.
//!
//! The pipeline: encode a graph twice (a direct two-layer convolutional view
//! and a hierarchical coarsen-convolve-refine view), pull the views together
//! with contrastive objectives, regularize with an edge-reconstruction
//! objective, fuse, and classify the fused representation.

pub mod encoders;
pub mod graphdata;
pub mod losses;
pub mod numcore;
pub mod trainer;

pub use numcore::{DenseMatrix, SparseMatrix};
