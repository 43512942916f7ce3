use super::{conv_step, conv_step_features, glorot, CoarsenLevel, Features};
use crate::numcore::{NodeId, NumError, SparseId, Tape};
use rand_chacha::ChaCha8Rng;

struct LevelIds {
    assign: SparseId,
    pool: SparseId,
    /// Normalized adjacency of the coarse graph this level produces.
    adj: SparseId,
    /// Convolution weights on the way down (fine side of this level).
    wc: NodeId,
    /// Convolution weights on the way back up, fed the unpooled rows
    /// concatenated with this level's pre-pool features.
    wr: NodeId,
}

/// Hierarchical encoder: convolve and mean-pool down a coarsening ladder,
/// convolve at the bottom, then unpool back up, re-convolving the unpooled
/// rows joined with the matching pre-pool features. A final convolution
/// projects to class width without an activation, so with zero levels the
/// whole pipeline degenerates to the plain two-layer GCN.
pub struct HierEncoder {
    pub adj0: SparseId,
    levels: Vec<LevelIds>,
    pub w_bottom: NodeId,
    pub w_proj: NodeId,
    dropout: f64,
    rng: ChaCha8Rng,
}

impl HierEncoder {
    /// Registers pooling operators and weights. Draw order is fixed: descent
    /// convolutions shallow to deep, bottom, ascent convolutions deep to
    /// shallow, projection.
    pub fn build(
        tape: &mut Tape,
        adj0: SparseId,
        coarsening: &[CoarsenLevel],
        in_dim: usize,
        hidden: usize,
        classes: usize,
        dropout: f64,
        init_rng: &mut ChaCha8Rng,
        dropout_rng: ChaCha8Rng,
    ) -> HierEncoder {
        let depth = coarsening.len();
        let mut operators = Vec::with_capacity(depth);
        let mut wc = Vec::with_capacity(depth);
        for (k, level) in coarsening.iter().enumerate() {
            operators.push((
                tape.add_sparse(level.assign.clone()),
                tape.add_sparse(level.pool.clone()),
                tape.add_sparse(level.coarse_norm.matrix().clone()),
            ));
            let fan_in = if k == 0 { in_dim } else { hidden };
            wc.push(tape.param(format!("hier.down{}", k), glorot(init_rng, fan_in, hidden)));
        }
        let bottom_in = if depth == 0 { in_dim } else { hidden };
        let w_bottom = tape.param("hier.bottom", glorot(init_rng, bottom_in, hidden));
        let mut wr = vec![w_bottom; depth];
        for k in (0..depth).rev() {
            wr[k] = tape.param(format!("hier.up{}", k), glorot(init_rng, 2 * hidden, hidden));
        }
        let w_proj = tape.param("hier.proj", glorot(init_rng, hidden, classes));

        let levels = operators
            .into_iter()
            .zip(wc)
            .zip(wr)
            .map(|(((assign, pool, adj), wc), wr)| LevelIds { assign, pool, adj, wc, wr })
            .collect();
        HierEncoder { adj0, levels, w_bottom, w_proj, dropout, rng: dropout_rng }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn weights(&self) -> Vec<NodeId> {
        let mut ws: Vec<NodeId> = self.levels.iter().map(|l| l.wc).collect();
        ws.push(self.w_bottom);
        ws.extend(self.levels.iter().rev().map(|l| l.wr));
        ws.push(self.w_proj);
        ws
    }

    /// Weight matrix subject to decay during training: the one reading raw
    /// features.
    pub fn first_layer(&self) -> NodeId {
        self.levels.first().map_or(self.w_bottom, |l| l.wc)
    }

    /// Normalized adjacency of graph `g` on the ladder (0 = input graph).
    fn adj_of(&self, g: usize) -> SparseId {
        if g == 0 {
            self.adj0
        } else {
            self.levels[g - 1].adj
        }
    }

    pub fn forward(&mut self, tape: &mut Tape, x: &Features, training: bool) -> Result<NodeId, NumError> {
        let rate = if training { self.dropout } else { 0.0 };
        let depth = self.levels.len();
        let mut cached = Vec::with_capacity(depth);

        // Descent: convolve on the fine graph, remember the result, pool it.
        let mut h = if depth == 0 {
            conv_step_features(tape, self.adj0, x, self.w_bottom, true, Some((rate, &mut self.rng)))?
        } else {
            let mut h = conv_step_features(tape, self.adj0, x, self.levels[0].wc, true, Some((rate, &mut self.rng)))
                .map_err(|e| at_level("descent", 0, e))?;
            cached.push(h);
            h = tape.spmm(self.levels[0].pool, h).map_err(|e| at_level("pool", 0, e))?;
            for k in 1..depth {
                let pre = conv_step(tape, self.adj_of(k), h, self.levels[k].wc, true, Some((rate, &mut self.rng)))
                    .map_err(|e| at_level("descent", k, e))?;
                cached.push(pre);
                h = tape.spmm(self.levels[k].pool, pre).map_err(|e| at_level("pool", k, e))?;
            }
            conv_step(tape, self.adj_of(depth), h, self.w_bottom, true, Some((rate, &mut self.rng)))
                .map_err(|e| at_level("bottom", depth, e))?
        };

        // Ascent: copy hyper-node rows to members, join with the pre-pool
        // features cached at the same depth, convolve on the fine graph.
        for k in (0..depth).rev() {
            let up = tape.spmm(self.levels[k].assign, h).map_err(|e| at_level("unpool", k, e))?;
            let joined = tape.concat_cols(up, cached[k]).map_err(|e| at_level("join", k, e))?;
            h = conv_step(tape, self.adj_of(k), joined, self.levels[k].wr, true, Some((rate, &mut self.rng)))
                .map_err(|e| at_level("ascent", k, e))?;
        }

        conv_step(tape, self.adj0, h, self.w_proj, false, Some((rate, &mut self.rng)))
    }
}

fn at_level(stage: &str, level: usize, e: NumError) -> NumError {
    NumError::Invalid { op: "hier_forward", msg: format!("{} level {}: {}", stage, level, e) }
}
