use super::contrastive::row_lse;
use super::LossError;
use crate::encoders::ViewEmbeddings;
use crate::numcore::{DenseMatrix, NodeId, NumError, Tape};

/// Convex blend of the two views: lambda * H1 + (1 - lambda) * H2. At the
/// endpoints the untouched view node is returned directly, so a weight of 1
/// or 0 leaves no trace of the other branch in the graph.
pub fn fuse_outputs(tape: &mut Tape, v: &ViewEmbeddings, lambda_phi1: f64) -> Result<NodeId, NumError> {
    if !(0.0..=1.0).contains(&lambda_phi1) {
        return Err(NumError::Invalid {
            op: "fuse_outputs",
            msg: format!("lambda_phi1 {} outside [0, 1]", lambda_phi1),
        });
    }
    if lambda_phi1 == 1.0 {
        return Ok(v.h_phi1);
    }
    if lambda_phi1 == 0.0 {
        return Ok(v.h_phi2);
    }
    let a = tape.scale(v.h_phi1, lambda_phi1)?;
    let b = tape.scale(v.h_phi2, 1.0 - lambda_phi1)?;
    tape.add(a, b)
}

/// Softmax cross-entropy summed over the labeled rows: row-softmax the
/// logits, then take minus the log-probability of each labeled node's true
/// class. Computed as log-sum-exp minus the picked logit, which never forms
/// the probabilities explicitly.
pub fn cross_entropy_loss(
    tape: &mut Tape,
    logits: NodeId,
    targets: &DenseMatrix,
    labeled: &[usize],
) -> Result<NodeId, LossError> {
    if labeled.is_empty() {
        return Err(LossError::NoLabeledNodes);
    }
    let (n, c) = tape.value(logits).shape();
    if targets.shape() != (n, c) {
        return Err(LossError::Num(NumError::DimMismatch {
            op: "cross_entropy_loss",
            lhs: (n, c),
            rhs: targets.shape(),
        }));
    }
    let mut picked_rows = Vec::with_capacity(labeled.len());
    for &i in labeled {
        if i >= n {
            return Err(LossError::Num(NumError::Invalid {
                op: "cross_entropy_loss",
                msg: format!("labeled index {} out of range for {} nodes", i, n),
            }));
        }
        let row: Vec<f64> = (0..c).map(|j| targets.get(i, j)).collect();
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > 1e-12 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(LossError::BadTargetRow { node: i, sum });
        }
        picked_rows.push(row);
    }

    let g = tape.gather_rows(logits, labeled.to_vec())?;
    let y = tape.constant(DenseMatrix::from_rows(&picked_rows)?);
    let lse = row_lse(tape, g)?;
    let hit = tape.mul(g, y)?;
    let picked = tape.row_sum(hit)?;
    let neg_lse = tape.scale(lse, -1.0)?;
    let log_p = tape.add(picked, neg_lse)?;
    let total = tape.reduce_sum(log_p)?;
    Ok(tape.scale(total, -1.0)?)
}
