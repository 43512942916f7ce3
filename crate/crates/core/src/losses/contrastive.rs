use super::LossError;
use crate::encoders::ViewEmbeddings;
use crate::numcore::{DenseMatrix, NodeId, NumError, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// How the unsupervised denominator is formed: the full n x n similarity
/// product, or per-row sampled columns for graphs where n^2 is unaffordable.
#[derive(Clone, Copy, Debug)]
pub enum ContrastStrategy {
    Exact,
    Sampled { k: usize, seed: u64, round: u64 },
}

#[derive(Clone, Copy, Debug)]
pub struct ContrastOptions {
    pub normalize_rows: bool,
    pub strategy: ContrastStrategy,
}

impl Default for ContrastOptions {
    fn default() -> Self {
        ContrastOptions { normalize_rows: false, strategy: ContrastStrategy::Exact }
    }
}

/// Row-wise log-sum-exp with the row max detached as a constant; exact
/// because shifting by the max is an identity on the final value.
pub(crate) fn row_lse(tape: &mut Tape, c: NodeId) -> Result<NodeId, NumError> {
    let m = tape.value(c).row_max();
    let m = tape.constant(m);
    let neg_m = tape.scale(m, -1.0)?;
    let shifted = tape.add_col(c, neg_m)?;
    let e = tape.exp(shifted)?;
    let s = tape.row_sum(e)?;
    let ls = tape.log(s)?;
    tape.add(ls, m)
}

/// Log-sum-exp restricted to the columns where `mask` is 1. The shift uses
/// the in-mask row max, so out-of-mask entries can be arbitrarily larger;
/// clamping them at zero before exp keeps everything finite, and the clamp
/// only saturates on entries the mask multiplies away, so gradients are
/// untouched. Every mask row must contain at least one 1.
pub(crate) fn row_lse_masked(tape: &mut Tape, c: NodeId, mask: &DenseMatrix) -> Result<NodeId, NumError> {
    let v = tape.value(c);
    let (rows, cols) = v.shape();
    let mut m = DenseMatrix::zeros(rows, 1);
    for i in 0..rows {
        let mut best = f64::NEG_INFINITY;
        for j in 0..cols {
            if mask.get(i, j) == 1.0 && v.get(i, j) > best {
                best = v.get(i, j);
            }
        }
        debug_assert!(best.is_finite(), "mask row {} has no entries", i);
        m.set(i, 0, best);
    }
    let mask = tape.constant(mask.clone());
    let m = tape.constant(m);
    let neg_m = tape.scale(m, -1.0)?;
    let shifted = tape.add_col(c, neg_m)?;
    let clamped = tape.clamp_max(shifted, 0.0)?;
    let e = tape.exp(clamped)?;
    let kept = tape.mul(e, mask)?;
    let s = tape.row_sum(kept)?;
    let ls = tape.log(s)?;
    tape.add(ls, m)
}

/// Scales each row to unit Euclidean norm (zero rows stay zero).
pub fn l2_normalize_rows(tape: &mut Tape, z: NodeId) -> Result<NodeId, NumError> {
    let sq = tape.mul(z, z)?;
    let s = tape.row_sum(sq)?;
    let s = tape.add_const(s, 1e-12)?;
    let norms = tape.sqrt(s)?;
    tape.div_col(z, norms)
}

fn prepared(tape: &mut Tape, z: NodeId, normalize: bool) -> Result<NodeId, NumError> {
    if normalize {
        l2_normalize_rows(tape, z)
    } else {
        Ok(z)
    }
}

/// For each row, `k` column indices drawn uniformly from the other rows.
fn sampled_indices(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(n * k);
    for i in 0..n {
        for _ in 0..k {
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            idx.push(j);
        }
    }
    idx
}

/// Cross-view alignment over all nodes: each node's inner product with its
/// own row in the other view is pushed above its products with every other
/// row, both directions, averaged with weight 1/(2n).
pub fn unsup_contrastive_loss(
    tape: &mut Tape,
    v: &ViewEmbeddings,
    opts: &ContrastOptions,
) -> Result<NodeId, LossError> {
    let n = tape.value(v.h_phi1).rows();
    let z1 = prepared(tape, v.h_phi1, opts.normalize_rows)?;
    let z2 = prepared(tape, v.h_phi2, opts.normalize_rows)?;
    let pos = tape.row_inner_products(z1, z2)?;

    let (lse12, lse21) = match opts.strategy {
        ContrastStrategy::Sampled { k, seed, round } if n > 1 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(SAMPLED_CONTRAST_STREAM_BASE + round);
            let idx12 = sampled_indices(&mut rng, n, k);
            let others12 = tape.sampled_inner(z1, z2, idx12, k)?;
            let all12 = tape.concat_cols(pos, others12)?;
            let idx21 = sampled_indices(&mut rng, n, k);
            let others21 = tape.sampled_inner(z2, z1, idx21, k)?;
            let all21 = tape.concat_cols(pos, others21)?;
            (row_lse(tape, all12)?, row_lse(tape, all21)?)
        }
        _ => {
            let c12 = tape.matmul_bt(z1, z2)?;
            let c21 = tape.matmul_bt(z2, z1)?;
            (row_lse(tape, c12)?, row_lse(tape, c21)?)
        }
    };

    let neg12 = tape.scale(lse12, -1.0)?;
    let neg21 = tape.scale(lse21, -1.0)?;
    let t12 = tape.add(pos, neg12)?;
    let t21 = tape.add(pos, neg21)?;
    let both = tape.add(t12, t21)?;
    let total = tape.reduce_sum(both)?;
    Ok(tape.scale(total, -1.0 / (2.0 * n as f64))?)
}

/// Stream block for sampled-denominator index draws, offset per round so
/// every training epoch sees fresh independent columns.
const SAMPLED_CONTRAST_STREAM_BASE: u64 = 2_000_000;

/// Label-aware alignment over the labeled nodes only: for each labeled node
/// the mass on same-class rows (own row included) is pushed above the mass
/// on all labeled rows, both view directions, averaged with weight 1/(2l).
pub fn sup_contrastive_loss(
    tape: &mut Tape,
    v: &ViewEmbeddings,
    labels: &[i64],
    labeled: &[usize],
    normalize_rows: bool,
) -> Result<NodeId, LossError> {
    if labeled.is_empty() {
        return Err(LossError::NoLabeledNodes);
    }
    for &i in labeled {
        if i >= labels.len() {
            return Err(LossError::Num(NumError::Invalid {
                op: "sup_contrastive_loss",
                msg: format!("labeled index {} out of range for {} nodes", i, labels.len()),
            }));
        }
        if labels[i] < 0 {
            return Err(LossError::UnlabeledNode(i));
        }
    }
    let l = labeled.len();
    let mask = DenseMatrix::from_fn(l, l, |a, b| if labels[labeled[a]] == labels[labeled[b]] { 1.0 } else { 0.0 })
        .expect("finite mask");

    let zl1 = tape.gather_rows(v.h_phi1, labeled.to_vec())?;
    let zl2 = tape.gather_rows(v.h_phi2, labeled.to_vec())?;
    let zl1 = prepared(tape, zl1, normalize_rows)?;
    let zl2 = prepared(tape, zl2, normalize_rows)?;

    let c12 = tape.matmul_bt(zl1, zl2)?;
    let num12 = row_lse_masked(tape, c12, &mask)?;
    let den12 = row_lse(tape, c12)?;
    let c21 = tape.matmul_bt(zl2, zl1)?;
    let num21 = row_lse_masked(tape, c21, &mask)?;
    let den21 = row_lse(tape, c21)?;

    let neg_den12 = tape.scale(den12, -1.0)?;
    let neg_den21 = tape.scale(den21, -1.0)?;
    let t12 = tape.add(num12, neg_den12)?;
    let t21 = tape.add(num21, neg_den21)?;
    let both = tape.add(t12, t21)?;
    let total = tape.reduce_sum(both)?;
    Ok(tape.scale(total, -1.0 / (2.0 * l as f64))?)
}

/// The two contrastive terms plus their sum, all on the tape.
pub struct SscTerms {
    pub unsupervised: NodeId,
    pub supervised: NodeId,
    pub combined: NodeId,
}

pub fn ssc_loss(
    tape: &mut Tape,
    v: &ViewEmbeddings,
    labels: &[i64],
    labeled: &[usize],
    opts: &ContrastOptions,
) -> Result<SscTerms, LossError> {
    let unsupervised = unsup_contrastive_loss(tape, v, opts)?;
    let supervised = sup_contrastive_loss(tape, v, labels, labeled, opts.normalize_rows)?;
    let combined = tape.add(unsupervised, supervised)?;
    Ok(SscTerms { unsupervised, supervised, combined })
}
