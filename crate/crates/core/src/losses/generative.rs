use super::LossError;
use crate::encoders::ViewEmbeddings;
use crate::graphdata::GraphDataset;
use crate::numcore::{NodeId, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream block for negative-edge draws, offset per round so every training
/// epoch sees a fresh independent batch.
const EDGE_SAMPLE_STREAM_BASE: u64 = 1_000_000;

/// One round's edge-reconstruction batch: every stored edge in both
/// directions as positives, plus uniformly drawn ordered non-edge pairs.
pub struct EdgeSampleBatch {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
    pub seed: u64,
}

impl EdgeSampleBatch {
    /// Draws negatives from stream `EDGE_SAMPLE_STREAM_BASE + round` of the
    /// generator seeded with `seed`; every negative is verified against the
    /// adjacency and self-pairs are excluded.
    pub fn sample(ds: &GraphDataset, negative_ratio: f64, seed: u64, round: u64) -> Result<Self, LossError> {
        let n = ds.nodes();
        let mut positives = Vec::with_capacity(2 * ds.undirected_edge_count());
        for (i, j) in ds.edge_list() {
            positives.push((i, j));
            positives.push((j, i));
        }
        let target = (negative_ratio * positives.len() as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(EDGE_SAMPLE_STREAM_BASE + round);
        let mut negatives = Vec::with_capacity(target);
        let budget = 100 * target + 1000;
        let mut attempts = 0usize;
        while negatives.len() < target {
            if attempts >= budget {
                return Err(LossError::NegativesExhausted(attempts));
            }
            attempts += 1;
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i == j || ds.has_edge(i, j) {
                continue;
            }
            negatives.push((i, j));
        }
        Ok(EdgeSampleBatch { positives, negatives, seed })
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty() && self.negatives.is_empty()
    }
}

/// Mean negative log-likelihood of reconstructing the batch through a
/// logistic head on concatenated cross-view pairs: row i of the first view
/// joined with row j of the second, projected by `w` to a logit. Computed in
/// softplus form, so saturated probabilities cannot produce infinities.
pub fn generative_loss(
    tape: &mut Tape,
    v: &ViewEmbeddings,
    w: NodeId,
    batch: &EdgeSampleBatch,
) -> Result<NodeId, LossError> {
    if batch.is_empty() {
        return Err(LossError::EmptyEdgeBatch);
    }
    let mut is = Vec::with_capacity(batch.len());
    let mut js = Vec::with_capacity(batch.len());
    let mut targets = Vec::with_capacity(batch.len());
    for &(i, j) in &batch.positives {
        is.push(i);
        js.push(j);
        targets.push(1.0);
    }
    for &(i, j) in &batch.negatives {
        is.push(i);
        js.push(j);
        targets.push(0.0);
    }
    let a = tape.gather_rows(v.h_phi1, is)?;
    let b = tape.gather_rows(v.h_phi2, js)?;
    let pairs = tape.concat_cols(a, b)?;
    let logits = tape.matmul(pairs, w)?;
    Ok(tape.bce_with_logits_mean(logits, targets)?)
}
