//! Stochastic-block-model generator: a seeded synthetic benchmark whose
//! community structure is informative for the labels, with a feature signal
//! whose quality is controlled by one noise knob.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DataError, GraphDataset};
use crate::numcore::{DenseMatrix, SparseMatrix};

/// Parameters for `generate_sbm`.
#[derive(Debug, Clone)]
pub struct SbmSpec {
    pub blocks: usize,
    pub block_size: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    /// Feature width; must be at least `blocks` so each block gets its own
    /// one-hot coordinate.
    pub feature_dim: usize,
    /// Standard deviation of the Gaussian noise added to every feature entry.
    pub noise: f64,
    pub labels_per_class: usize,
    pub seed: u64,
}

impl SbmSpec {
    fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::BadSpec(msg));
        if self.blocks < 2 {
            return bad(format!("need at least 2 blocks, got {}", self.blocks));
        }
        if self.block_size == 0 {
            return bad("block_size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.p_intra) || !(0.0..=1.0).contains(&self.p_inter) {
            return bad(format!("probabilities must lie in [0,1], got {} / {}", self.p_intra, self.p_inter));
        }
        if self.p_intra <= self.p_inter {
            return bad(format!("p_intra {} must exceed p_inter {}", self.p_intra, self.p_inter));
        }
        if self.feature_dim < self.blocks {
            return bad(format!("feature_dim {} smaller than block count {}", self.feature_dim, self.blocks));
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return bad(format!("noise must be a non-negative float, got {}", self.noise));
        }
        if self.labels_per_class > self.block_size {
            return bad(format!(
                "labels_per_class {} exceeds block size {}",
                self.labels_per_class, self.block_size
            ));
        }
        Ok(())
    }
}

/// Draws a block-model graph. Every random draw comes from one stream seeded
/// by `spec.seed`, consumed in a fixed order (edges, features, splits), so
/// equal specs produce identical datasets.
pub fn generate_sbm(spec: &SbmSpec) -> Result<GraphDataset, DataError> {
    spec.validate()?;
    let n = spec.blocks * spec.block_size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let block_of = |i: usize| i / spec.block_size;

    let mut triplets = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if block_of(i) == block_of(j) { spec.p_intra } else { spec.p_inter };
            if rng.gen_bool(p) {
                triplets.push((i, j, 1.0));
                triplets.push((j, i, 1.0));
            }
        }
    }
    let adjacency = SparseMatrix::from_triplets(n, n, &triplets)?;

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut data = Vec::with_capacity(n * spec.feature_dim);
    for i in 0..n {
        for j in 0..spec.feature_dim {
            let signal = if j == block_of(i) { 1.0 } else { 0.0 };
            data.push(signal + spec.noise * normal.sample(&mut rng));
        }
    }
    let features = DenseMatrix::new(n, spec.feature_dim, data)?;

    let labels: Vec<i64> = (0..n).map(|i| block_of(i) as i64).collect();

    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for b in 0..spec.blocks {
        let mut members: Vec<usize> = (b * spec.block_size..(b + 1) * spec.block_size).collect();
        members.shuffle(&mut rng);
        let remaining = spec.block_size - spec.labels_per_class;
        let val_count = remaining.div_euclid(2).min(30);
        train.extend(&members[..spec.labels_per_class]);
        val.extend(&members[spec.labels_per_class..spec.labels_per_class + val_count]);
        test.extend(&members[spec.labels_per_class + val_count..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();

    GraphDataset::new(features, adjacency, labels, spec.blocks, train, val, test)
}
