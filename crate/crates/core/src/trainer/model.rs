use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoders::{build_coarsening, Features, GcnEncoder, HierEncoder, ViewEmbeddings};
use crate::graphdata::{normalize_adjacency, GraphDataset};
use crate::losses::{fuse_outputs, LossWeights};
use crate::numcore::{DenseMatrix, NodeId, Tape};
use crate::trainer::{TrainConfig, TrainError};

// Every random draw comes from a ChaCha stream derived from the run seed, so
// adding or removing one consumer never shifts the others.
const GCN_INIT_STREAM: u64 = 10;
const HIER_INIT_STREAM: u64 = 11;
const GCN_DROPOUT_STREAM: u64 = 20;
const HIER_DROPOUT_STREAM: u64 = 21;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Encoder outputs for one pass. A view is absent when the objective cannot
/// reach its encoder, never because a forward failed.
pub struct ModelViews {
    pub h_phi1: Option<NodeId>,
    pub h_phi2: Option<NodeId>,
}

pub struct Predictions {
    /// Argmax class per node; ties resolve to the lower class index.
    pub classes: Vec<usize>,
    /// Row-softmax of the fused output, one row per node.
    pub probs: DenseMatrix,
}

/// Both encoders plus the generative head, built on a shared tape. Encoders
/// whose output cannot influence the effective objective are skipped, which
/// keeps ablation baselines free of dead computation.
pub struct Cg3Model {
    pub gcn: Option<GcnEncoder>,
    pub hier: Option<HierEncoder>,
    pub head_w: Option<NodeId>,
    features: Features,
    eff: LossWeights,
    decay: Vec<(NodeId, f64)>,
}

impl Cg3Model {
    pub fn build(tape: &mut Tape, ds: &GraphDataset, config: &TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let eff = config.effective_weights();
        let needs_both = eff.lambda_ssc > 0.0 || eff.lambda_g2 > 0.0;
        let want_gcn = needs_both || eff.lambda_phi1 > 0.0;
        let want_hier = needs_both || eff.lambda_phi1 < 1.0;

        let norm = normalize_adjacency(ds.adjacency())?;
        let adj = tape.add_sparse(norm.matrix().clone());
        let features = Features::register(tape, ds.features());

        let gcn = if want_gcn {
            let mut init = stream_rng(config.seed, GCN_INIT_STREAM);
            Some(GcnEncoder::build(
                tape,
                adj,
                ds.feature_dim(),
                config.hidden,
                ds.classes(),
                config.dropout,
                &mut init,
                stream_rng(config.seed, GCN_DROPOUT_STREAM),
            ))
        } else {
            None
        };

        let hier = if want_hier {
            let coarsening = build_coarsening(ds.adjacency(), config.levels)?;
            let mut init = stream_rng(config.seed, HIER_INIT_STREAM);
            Some(HierEncoder::build(
                tape,
                adj,
                &coarsening,
                ds.feature_dim(),
                config.hidden,
                ds.classes(),
                config.dropout,
                &mut init,
                stream_rng(config.seed, HIER_DROPOUT_STREAM),
            ))
        } else {
            None
        };

        // The edge head starts at zero, so every pair opens at probability
        // one half regardless of the embedding scale.
        let head_w = (eff.lambda_g2 > 0.0)
            .then(|| tape.param("head.w", DenseMatrix::zeros(2 * ds.classes(), 1)));

        let mut decay = Vec::new();
        if let Some(g) = &gcn {
            for w in g.weights() {
                decay.push((w, if w == g.first_layer() { config.weight_decay } else { 0.0 }));
            }
        }
        if let Some(h) = &hier {
            for w in h.weights() {
                decay.push((w, if w == h.first_layer() { config.weight_decay } else { 0.0 }));
            }
        }
        if let Some(w) = head_w {
            decay.push((w, 0.0));
        }

        Ok(Cg3Model { gcn, hier, head_w, features, eff, decay })
    }

    pub fn effective_weights(&self) -> LossWeights {
        self.eff
    }

    /// Parameters paired with their decay strength, in registration order.
    pub fn decay_pairs(&self) -> &[(NodeId, f64)] {
        &self.decay
    }

    pub fn encode(&mut self, tape: &mut Tape, training: bool) -> Result<ModelViews, TrainError> {
        let h_phi1 = match &mut self.gcn {
            Some(g) => Some(g.forward(tape, &self.features, training)?),
            None => None,
        };
        let h_phi2 = match &mut self.hier {
            Some(h) => Some(h.forward(tape, &self.features, training)?),
            None => None,
        };
        Ok(ModelViews { h_phi1, h_phi2 })
    }

    /// Both views, for the loss terms that need the pair.
    pub fn paired(&self, views: &ModelViews) -> Result<ViewEmbeddings, TrainError> {
        match (views.h_phi1, views.h_phi2) {
            (Some(h_phi1), Some(h_phi2)) => Ok(ViewEmbeddings { h_phi1, h_phi2 }),
            _ => Err(TrainError::InvalidConfig(
                "contrastive and generative terms need both encoders".into(),
            )),
        }
    }

    /// Classification output: the weighted view blend, or whichever single
    /// view exists.
    pub fn fused(&self, tape: &mut Tape, views: &ModelViews) -> Result<NodeId, TrainError> {
        match (views.h_phi1, views.h_phi2) {
            (Some(h_phi1), Some(h_phi2)) => {
                let v = ViewEmbeddings { h_phi1, h_phi2 };
                Ok(fuse_outputs(tape, &v, self.eff.lambda_phi1)?)
            }
            (Some(h), None) | (None, Some(h)) => Ok(h),
            (None, None) => Err(TrainError::InvalidConfig("no encoder was built".into())),
        }
    }

    /// Dropout-free forward pass through the fused head.
    pub fn predict(&mut self, tape: &mut Tape) -> Result<Predictions, TrainError> {
        let views = self.encode(tape, false)?;
        let out = self.fused(tape, &views)?;
        let probs_id = tape.row_softmax(out)?;
        let probs = tape.value(probs_id).clone();
        let classes = argmax_rows(&probs);
        Ok(Predictions { classes, probs })
    }

    /// Dropout-free embeddings of whichever views exist, for export.
    pub fn embeddings(
        &mut self,
        tape: &mut Tape,
    ) -> Result<(Option<DenseMatrix>, Option<DenseMatrix>), TrainError> {
        let views = self.encode(tape, false)?;
        Ok((
            views.h_phi1.map(|id| tape.value(id).clone()),
            views.h_phi2.map(|id| tape.value(id).clone()),
        ))
    }
}

pub(crate) fn argmax_rows(m: &DenseMatrix) -> Vec<usize> {
    (0..m.rows())
        .map(|r| {
            let row = m.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Fraction of `split` whose predicted class matches the label.
pub fn accuracy(
    classes: &[usize],
    ds: &GraphDataset,
    split: &[usize],
    split_name: &'static str,
) -> Result<f64, TrainError> {
    if split.is_empty() {
        return Err(TrainError::EmptySplit { split: split_name });
    }
    let mut correct = 0usize;
    for &i in split {
        let label = ds.labels()[i];
        if label < 0 {
            return Err(TrainError::UnlabeledInSplit { split: split_name, node: i });
        }
        if classes[i] == label as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / split.len() as f64)
}
