//! The two view encoders: a two-layer graph convolutional network and a
//! hierarchical coarsen-convolve-refine network. Both emit n x c embeddings
//! over a shared tape so downstream losses can differentiate through them.

mod coarsen;
mod gcn;
mod hier;

pub use coarsen::{build_coarsening, CoarsenLevel};
pub use gcn::GcnEncoder;
pub use hier::HierEncoder;

use crate::graphdata::DataError;
use crate::numcore::{DenseMatrix, NodeId, NumError, SparseId, SparseMatrix, Tape};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error(transparent)]
    Graph(#[from] DataError),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Both views of the node embeddings, living on the same tape.
pub struct ViewEmbeddings {
    pub h_phi1: NodeId,
    pub h_phi2: NodeId,
}

/// Node features registered once per run. Inputs below this density are kept
/// in CSR form so the first-layer product only touches stored entries; the
/// dense kernel skips exact zeros, so both paths accumulate in the same order
/// and agree bitwise.
const SPARSE_FEATURE_DENSITY: f64 = 0.25;

pub enum Features {
    Dense(NodeId),
    Sparse(SparseId),
}

impl Features {
    pub fn register(tape: &mut Tape, x: &DenseMatrix) -> Features {
        let total = x.rows() * x.cols();
        let nnz = x.data().iter().filter(|v| **v != 0.0).count();
        if total > 0 && (nnz as f64) < SPARSE_FEATURE_DENSITY * total as f64 {
            Features::Sparse(tape.add_sparse(SparseMatrix::from_dense(x)))
        } else {
            Features::Dense(tape.constant(x.clone()))
        }
    }

    pub fn shape(&self, tape: &Tape) -> (usize, usize) {
        match self {
            Features::Dense(n) => tape.value(*n).shape(),
            Features::Sparse(s) => (tape.sparse(*s).rows(), tape.sparse(*s).cols()),
        }
    }
}

/// Inverted-dropout mask applied to a convolution input. Inactive at rate 0.
fn apply_dropout(tape: &mut Tape, h: NodeId, rate: f64, rng: &mut ChaCha8Rng) -> Result<NodeId, NumError> {
    if rate == 0.0 {
        return Ok(h);
    }
    let keep = 1.0 - rate;
    let boost = 1.0 / keep;
    let (r, c) = tape.value(h).shape();
    let mask = DenseMatrix::from_fn(r, c, |_, _| if rng.gen_bool(keep) { boost } else { 0.0 })?;
    let mask = tape.constant(mask);
    tape.mul(h, mask)
}

/// Dropout over a sparse input keeps the stored pattern and zeroes values,
/// so the masked matrix stays structurally identical and cheap to rebuild.
fn mask_sparse(tape: &mut Tape, sid: SparseId, rate: f64, rng: &mut ChaCha8Rng) -> Result<SparseId, NumError> {
    if rate == 0.0 {
        return Ok(sid);
    }
    let keep = 1.0 - rate;
    let boost = 1.0 / keep;
    let src = tape.sparse(sid);
    let (rows, cols) = (src.rows(), src.cols());
    let mut trips = Vec::with_capacity(src.nnz());
    for r in 0..rows {
        let (cs, vs) = src.row_entries(r);
        for (&c, &v) in cs.iter().zip(vs) {
            trips.push((r, c, if rng.gen_bool(keep) { v * boost } else { 0.0 }));
        }
    }
    let masked = SparseMatrix::from_triplets(rows, cols, &trips)?;
    Ok(tape.add_sparse(masked))
}

/// One graph convolution: aggregate(input * w) with optional ReLU and
/// dropout on the input. Shared by both encoders so that a zero-level
/// hierarchical pass builds the exact op sequence of the plain GCN.
pub(crate) fn conv_step(
    tape: &mut Tape,
    adj: SparseId,
    input: NodeId,
    w: NodeId,
    activate: bool,
    dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<NodeId, NumError> {
    let input = match dropout {
        Some((rate, rng)) => apply_dropout(tape, input, rate, rng)?,
        None => input,
    };
    let hw = tape.matmul(input, w)?;
    let agg = tape.spmm(adj, hw)?;
    if activate {
        tape.relu(agg)
    } else {
        Ok(agg)
    }
}

/// First-layer convolution reading directly from the registered features.
pub(crate) fn conv_step_features(
    tape: &mut Tape,
    adj: SparseId,
    x: &Features,
    w: NodeId,
    activate: bool,
    dropout: Option<(f64, &mut ChaCha8Rng)>,
) -> Result<NodeId, NumError> {
    match x {
        Features::Dense(n) => conv_step(tape, adj, *n, w, activate, dropout),
        Features::Sparse(sid) => {
            let sid = match dropout {
                Some((rate, rng)) => mask_sparse(tape, *sid, rate, rng)?,
                None => *sid,
            };
            let xw = tape.spmm(sid, w)?;
            let agg = tape.spmm(adj, xw)?;
            if activate {
                tape.relu(agg)
            } else {
                Ok(agg)
            }
        }
    }
}

/// Fan-balanced uniform init; entries drawn row-major so the stream of draws
/// is a pure function of the shape.
pub(crate) fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-bound..bound))
        .expect("finite init")
}

/// Runs both encoders on the same features.
pub fn encode_views(
    tape: &mut Tape,
    gcn: &mut GcnEncoder,
    hier: &mut HierEncoder,
    x: &Features,
    training: bool,
) -> Result<ViewEmbeddings, NumError> {
    let h_phi1 = gcn.forward(tape, x, training)?;
    let h_phi2 = hier.forward(tape, x, training)?;
    Ok(ViewEmbeddings { h_phi1, h_phi2 })
}
