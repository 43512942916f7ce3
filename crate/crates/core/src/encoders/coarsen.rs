//! Graph coarsening by similarity matching.
//!
//! Each level pairs adjacent nodes with the most similar closed
//! neighborhoods (Jaccard over N[u] including u itself), greedily in
//! ascending node order with ties broken toward the lower id. Matched pairs
//! and leftover singletons become the next level's hyper-nodes.

use super::EncoderError;
use crate::graphdata::{normalize_adjacency, NormalizedAdjacency};
use crate::numcore::SparseMatrix;

/// One coarsening step.
pub struct CoarsenLevel {
    /// n_fine x n_coarse; row u has a single 1 in the column of u's
    /// hyper-node. Multiplying by it copies hyper-node rows back to members.
    pub assign: SparseMatrix,
    /// n_coarse x n_fine mean-pooling operator: assign transposed with rows
    /// scaled by member count.
    pub pool: SparseMatrix,
    /// Coarse 0/1 adjacency: hyper-nodes are linked iff any of their members
    /// were (self-links dropped).
    pub coarse_adj: SparseMatrix,
    /// Normalized coarse adjacency for convolutions at the coarse level.
    pub coarse_norm: NormalizedAdjacency,
}

impl CoarsenLevel {
    pub fn fine_nodes(&self) -> usize {
        self.assign.rows()
    }

    pub fn coarse_nodes(&self) -> usize {
        self.assign.cols()
    }
}

/// Jaccard similarity of closed neighborhoods given as sorted slices.
fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let mut inter = 0usize;
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

fn coarsen_once(a: &SparseMatrix) -> Result<CoarsenLevel, EncoderError> {
    let n = a.rows();

    // Sorted closed neighborhoods.
    let mut closed: Vec<Vec<usize>> = Vec::with_capacity(n);
    for u in 0..n {
        let (cols, _) = a.row_entries(u);
        let mut set = Vec::with_capacity(cols.len() + 1);
        let mut inserted = false;
        for &v in cols {
            if !inserted && v > u {
                set.push(u);
                inserted = true;
            }
            set.push(v);
        }
        if !inserted {
            set.push(u);
        }
        closed.push(set);
    }

    let mut group_of = vec![usize::MAX; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for u in 0..n {
        if group_of[u] != usize::MAX {
            continue;
        }
        // Best unmatched neighbor by similarity; ascending scan plus strict
        // improvement gives the lower-id tie-break for free.
        let mut best: Option<(f64, usize)> = None;
        let (cols, _) = a.row_entries(u);
        for &v in cols {
            if v == u || group_of[v] != usize::MAX {
                continue;
            }
            let score = jaccard(&closed[u], &closed[v]);
            if best.map_or(true, |(s, _)| score > s) {
                best = Some((score, v));
            }
        }
        let gid = groups.len();
        match best {
            Some((_, v)) => {
                group_of[u] = gid;
                group_of[v] = gid;
                groups.push(vec![u, v]);
            }
            None => {
                group_of[u] = gid;
                groups.push(vec![u]);
            }
        }
    }

    let n_coarse = groups.len();
    let mut assign_trips = Vec::with_capacity(n);
    let mut pool_trips = Vec::with_capacity(n);
    for (gid, members) in groups.iter().enumerate() {
        let share = 1.0 / members.len() as f64;
        for &m in members {
            assign_trips.push((m, gid, 1.0));
            pool_trips.push((gid, m, share));
        }
    }
    let assign = SparseMatrix::from_triplets(n, n_coarse, &assign_trips)?;
    let pool = SparseMatrix::from_triplets(n_coarse, n, &pool_trips)?;

    // Coarse adjacency: project every fine edge, binarize, drop self-links.
    let mut coarse_set = std::collections::BTreeSet::new();
    for u in 0..n {
        let (cols, _) = a.row_entries(u);
        for &v in cols {
            let (gu, gv) = (group_of[u], group_of[v]);
            if gu != gv {
                coarse_set.insert((gu, gv));
            }
        }
    }
    let coarse_trips: Vec<(usize, usize, f64)> = coarse_set.into_iter().map(|(i, j)| (i, j, 1.0)).collect();
    let coarse_adj = SparseMatrix::from_triplets(n_coarse, n_coarse, &coarse_trips)?;
    let coarse_norm = normalize_adjacency(&coarse_adj)?;

    Ok(CoarsenLevel { assign, pool, coarse_adj, coarse_norm })
}

/// Builds up to `levels` coarsening steps, stopping early once a level has
/// fewer than 2 nodes left; the returned length is the achieved depth.
pub fn build_coarsening(a: &SparseMatrix, levels: usize) -> Result<Vec<CoarsenLevel>, EncoderError> {
    if a.rows() != a.cols() {
        return Err(EncoderError::Graph(crate::graphdata::DataError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        }));
    }
    if let Some((i, j)) = a.asymmetry(0.0) {
        return Err(EncoderError::Graph(crate::graphdata::DataError::Asymmetric { i, j }));
    }
    let mut out = Vec::with_capacity(levels);
    let mut current = a.clone();
    for _ in 0..levels {
        if current.rows() < 2 {
            break;
        }
        let level = coarsen_once(&current)?;
        current = level.coarse_adj.clone();
        out.push(level);
    }
    Ok(out)
}
