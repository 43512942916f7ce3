//! Training objectives: cross-view contrastive alignment (unsupervised and
//! label-aware), edge reconstruction through a logistic head, view fusion,
//! and softmax cross-entropy, combined into one scalar.

mod classify;
mod contrastive;
mod generative;

pub use classify::{cross_entropy_loss, fuse_outputs};
pub use contrastive::{
    l2_normalize_rows, ssc_loss, sup_contrastive_loss, unsup_contrastive_loss, ContrastOptions,
    ContrastStrategy, SscTerms,
};
pub use generative::{generative_loss, EdgeSampleBatch};

use crate::numcore::{NodeId, NumError, Tape};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("no labeled nodes available for a supervised term")]
    NoLabeledNodes,
    #[error("labeled node {0} has no label")]
    UnlabeledNode(usize),
    #[error("node {node}: target row is not one-hot (sum {sum})")]
    BadTargetRow { node: usize, sum: f64 },
    #[error("negative edge sampling gave up after {0} attempts; graph is too dense")]
    NegativesExhausted(usize),
    #[error("edge batch is empty; the graph has no edges to reconstruct")]
    EmptyEdgeBatch,
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Scalar weights of the combined objective.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct LossWeights {
    pub lambda_phi1: f64,
    pub lambda_ssc: f64,
    pub lambda_g2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_phi1: 0.5, lambda_ssc: 1.0, lambda_g2: 1.0 }
    }
}

impl LossWeights {
    /// Fusion weight must be a valid blend; term weights must be finite and
    /// nonnegative (zero disables a term entirely).
    pub fn validate(&self) -> Result<(), LossError> {
        if !self.lambda_phi1.is_finite() || !(0.0..=1.0).contains(&self.lambda_phi1) {
            return Err(LossError::Num(NumError::Invalid {
                op: "loss_weights",
                msg: format!("lambda_phi1 {} outside [0, 1]", self.lambda_phi1),
            }));
        }
        for (name, v) in [("lambda_ssc", self.lambda_ssc), ("lambda_g2", self.lambda_g2)] {
            if !v.is_finite() || v < 0.0 {
                return Err(LossError::Num(NumError::Invalid {
                    op: "loss_weights",
                    msg: format!("{} {} must be finite and nonnegative", name, v),
                }));
            }
        }
        Ok(())
    }
}

/// Combines the terms that are actually in play. A term with zero weight (or
/// one that was never built) contributes nothing to the graph, so disabling
/// a term is bit-identical to never computing it.
pub fn overall_loss(
    tape: &mut Tape,
    ce: NodeId,
    ssc: Option<NodeId>,
    g2: Option<NodeId>,
    weights: &LossWeights,
) -> Result<NodeId, LossError> {
    weights.validate()?;
    let mut total = ce;
    if weights.lambda_ssc > 0.0 {
        let ssc = ssc.ok_or(LossError::Num(NumError::Invalid {
            op: "overall_loss",
            msg: "lambda_ssc > 0 but no contrastive term was built".into(),
        }))?;
        let scaled = tape.scale(ssc, weights.lambda_ssc)?;
        total = tape.add(total, scaled)?;
    }
    if weights.lambda_g2 > 0.0 {
        let g2 = g2.ok_or(LossError::Num(NumError::Invalid {
            op: "overall_loss",
            msg: "lambda_g2 > 0 but no generative term was built".into(),
        }))?;
        let scaled = tape.scale(g2, weights.lambda_g2)?;
        total = tape.add(total, scaled)?;
    }
    Ok(total)
}
