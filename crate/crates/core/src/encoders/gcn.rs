use super::{conv_step, conv_step_features, glorot, Features};
use crate::numcore::{NodeId, NumError, SparseId, Tape};
use rand_chacha::ChaCha8Rng;

/// Two-layer graph convolutional encoder:
/// relu(aggregate(X W0)) -> aggregate(H W1), output n x classes.
pub struct GcnEncoder {
    pub adj: SparseId,
    pub w0: NodeId,
    pub w1: NodeId,
    dropout: f64,
    rng: ChaCha8Rng,
}

impl GcnEncoder {
    /// Registers both weight matrices as parameters. `init_rng` supplies the
    /// weight draws (W0 then W1); `dropout_rng` is consumed across epochs.
    pub fn build(
        tape: &mut Tape,
        adj: SparseId,
        in_dim: usize,
        hidden: usize,
        classes: usize,
        dropout: f64,
        init_rng: &mut ChaCha8Rng,
        dropout_rng: ChaCha8Rng,
    ) -> GcnEncoder {
        let w0 = tape.param("gcn.w0", glorot(init_rng, in_dim, hidden));
        let w1 = tape.param("gcn.w1", glorot(init_rng, hidden, classes));
        GcnEncoder { adj, w0, w1, dropout, rng: dropout_rng }
    }

    pub fn weights(&self) -> Vec<NodeId> {
        vec![self.w0, self.w1]
    }

    /// Weight matrix subject to decay during training.
    pub fn first_layer(&self) -> NodeId {
        self.w0
    }

    pub fn forward(&mut self, tape: &mut Tape, x: &Features, training: bool) -> Result<NodeId, NumError> {
        let rate = if training { self.dropout } else { 0.0 };
        let h = conv_step_features(tape, self.adj, x, self.w0, true, Some((rate, &mut self.rng)))?;
        conv_step(tape, self.adj, h, self.w1, false, Some((rate, &mut self.rng)))
    }
}
