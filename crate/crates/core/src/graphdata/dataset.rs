//! The validated dataset record and adjacency normalization.

use super::DataError;
use crate::numcore::{DenseMatrix, SparseMatrix};

/// A node-classification dataset.
///
/// The adjacency is undirected (symmetric), unweighted, and stores no
/// self-loops; labels are `-1` for unknown, otherwise in `[0, classes)`;
/// the three index sets are pairwise disjoint and every train node is
/// labeled. All of this is checked at construction, so holders of a
/// `GraphDataset` can rely on it.
#[derive(Debug, Clone)]
pub struct GraphDataset {
    features: DenseMatrix,
    adjacency: SparseMatrix,
    labels: Vec<i64>,
    classes: usize,
    train_idx: Vec<usize>,
    val_idx: Vec<usize>,
    test_idx: Vec<usize>,
}

impl GraphDataset {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        features: DenseMatrix,
        adjacency: SparseMatrix,
        labels: Vec<i64>,
        classes: usize,
        train_idx: Vec<usize>,
        val_idx: Vec<usize>,
        test_idx: Vec<usize>,
    ) -> Result<Self, DataError> {
        let n = features.rows();
        if adjacency.rows() != adjacency.cols() {
            return Err(DataError::NotSquare { rows: adjacency.rows(), cols: adjacency.cols() });
        }
        if adjacency.rows() != n {
            return Err(DataError::Malformed {
                file: "<memory>".into(),
                msg: format!("{} feature rows but {} adjacency rows", n, adjacency.rows()),
            });
        }
        if let Some((i, j)) = adjacency.asymmetry(0.0) {
            return Err(DataError::Asymmetric { i, j });
        }
        for i in 0..n {
            if adjacency.get(i, i) != 0.0 {
                return Err(DataError::SelfLoop(i));
            }
        }
        if labels.len() != n {
            return Err(DataError::LabelCount { expected: n, got: labels.len() });
        }
        for (node, &label) in labels.iter().enumerate() {
            if label != -1 && !(0..classes as i64).contains(&label) {
                return Err(DataError::LabelRange { node, label, classes });
            }
        }
        let mut seen = vec![false; n];
        for (set, idx) in [("train", &train_idx), ("val", &val_idx), ("test", &test_idx)] {
            for &i in idx.iter() {
                if i >= n {
                    return Err(DataError::SplitRange { set, index: i, nodes: n });
                }
                if seen[i] {
                    return Err(DataError::OverlappingSplits(i));
                }
                seen[i] = true;
            }
        }
        for &i in &train_idx {
            if labels[i] == -1 {
                return Err(DataError::UnlabeledTrain(i));
            }
        }
        Ok(GraphDataset { features, adjacency, labels, classes, train_idx, val_idx, test_idx })
    }

    pub fn nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn train_idx(&self) -> &[usize] {
        &self.train_idx
    }

    pub fn val_idx(&self) -> &[usize] {
        &self.val_idx
    }

    pub fn test_idx(&self) -> &[usize] {
        &self.test_idx
    }

    pub fn undirected_edge_count(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    /// Undirected edge list with i < j, ascending.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.adjacency.nnz() / 2);
        for i in 0..self.nodes() {
            let (cols, _) = self.adjacency.row_entries(i);
            for &j in cols {
                if i < j {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency.get(i, j) != 0.0
    }

    /// One-hot label matrix; unknown-label rows are all zero.
    pub fn one_hot_labels(&self) -> DenseMatrix {
        let mut y = DenseMatrix::zeros(self.nodes(), self.classes);
        for (i, &label) in self.labels.iter().enumerate() {
            if label >= 0 {
                y.set(i, label as usize, 1.0);
            }
        }
        y
    }
}

/// Symmetrically normalized adjacency with implied self-loops: every entry
/// lies in (0, 1] and the matrix is symmetric.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    matrix: SparseMatrix,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn nodes(&self) -> usize {
        self.matrix.rows()
    }
}

/// Adds self-loops and scales each entry by the inverse square roots of the
/// looped degrees of its endpoints.
pub fn normalize_adjacency(a: &SparseMatrix) -> Result<NormalizedAdjacency, DataError> {
    if a.rows() != a.cols() {
        return Err(DataError::NotSquare { rows: a.rows(), cols: a.cols() });
    }
    if let Some((i, j)) = a.asymmetry(0.0) {
        return Err(DataError::Asymmetric { i, j });
    }
    let n = a.rows();
    for i in 0..n {
        if a.get(i, i) != 0.0 {
            return Err(DataError::SelfLoop(i));
        }
    }
    // Looped degree: 1 for the self-loop plus the existing row sum.
    let mut degree = Vec::with_capacity(n);
    for i in 0..n {
        let (_, vals) = a.row_entries(i);
        degree.push(1.0 + vals.iter().sum::<f64>());
    }
    // v / sqrt(d_i * d_j) rather than v * d_i^-1/2 * d_j^-1/2: one rounding
    // step instead of three.
    let mut triplets = Vec::with_capacity(a.nnz() + n);
    for i in 0..n {
        triplets.push((i, i, 1.0 / degree[i]));
        let (cols, vals) = a.row_entries(i);
        for (&j, &v) in cols.iter().zip(vals) {
            triplets.push((i, j, v / (degree[i] * degree[j]).sqrt()));
        }
    }
    let matrix = SparseMatrix::from_triplets(n, n, &triplets)?;
    Ok(NormalizedAdjacency { matrix })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adj(n: usize, edges: &[(usize, usize)]) -> SparseMatrix {
        let mut trips = Vec::new();
        for &(i, j) in edges {
            trips.push((i, j, 1.0));
            trips.push((j, i, 1.0));
        }
        SparseMatrix::from_triplets(n, n, &trips).unwrap()
    }

    #[test]
    fn isolated_node_normalizes_to_one() {
        let a = SparseMatrix::from_triplets(1, 1, &[]).unwrap();
        let norm = normalize_adjacency(&a).unwrap();
        assert_eq!(norm.matrix().to_dense().data(), &[1.0]);
    }

    #[test]
    fn single_edge_gives_all_halves() {
        let a = adj(2, &[(0, 1)]);
        let norm = normalize_adjacency(&a).unwrap();
        assert_eq!(norm.matrix().to_dense().data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn path_graph_matches_dense_oracle() {
        let a = adj(3, &[(0, 1), (1, 2)]);
        let norm = normalize_adjacency(&a).unwrap();

        // Dense oracle: D^-1/2 (A+I) D^-1/2 computed with dense ops.
        let loops = a.to_dense().add(&DenseMatrix::identity(3)).unwrap();
        let mut d_inv_sqrt = DenseMatrix::zeros(3, 3);
        for i in 0..3 {
            d_inv_sqrt.set(i, i, 1.0 / loops.row(i).iter().sum::<f64>().sqrt());
        }
        let oracle = d_inv_sqrt.matmul(&loops).unwrap().matmul(&d_inv_sqrt).unwrap();
        assert!(norm.matrix().to_dense().max_abs_diff(&oracle) < 1e-15);

        let sym = norm.matrix().asymmetry(1e-12);
        assert_eq!(sym, None);
    }

    #[test]
    fn asymmetric_adjacency_is_rejected_with_pair() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0)]).unwrap();
        match normalize_adjacency(&a) {
            Err(DataError::Asymmetric { i: 0, j: 1 }) => {}
            other => panic!("expected asymmetry error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn dataset_validation_catches_overlap_and_labels() {
        let feats = DenseMatrix::zeros(3, 2);
        let a = adj(3, &[(0, 1)]);
        let err = GraphDataset::new(
            feats.clone(),
            a.clone(),
            vec![0, 1, -1],
            2,
            vec![0],
            vec![0],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, DataError::OverlappingSplits(0)));

        let err = GraphDataset::new(feats.clone(), a.clone(), vec![0, 5, -1], 2, vec![0], vec![1], vec![2]).unwrap_err();
        assert!(matches!(err, DataError::LabelRange { node: 1, label: 5, .. }));

        let err = GraphDataset::new(feats, a, vec![0, 1, -1], 2, vec![2], vec![], vec![]).unwrap_err();
        assert!(matches!(err, DataError::UnlabeledTrain(2)));
    }

    #[test]
    fn one_hot_rows_are_exact() {
        let feats = DenseMatrix::zeros(3, 1);
        let a = adj(3, &[(0, 2)]);
        let ds = GraphDataset::new(feats, a, vec![1, -1, 0], 2, vec![0], vec![2], vec![]).unwrap();
        let y = ds.one_hot_labels();
        assert_eq!(y.row(0), &[0.0, 1.0]);
        assert_eq!(y.row(1), &[0.0, 0.0]);
        assert_eq!(y.row(2), &[1.0, 0.0]);
    }

    #[test]
    fn edge_list_is_upper_triangle() {
        let a = adj(4, &[(2, 0), (1, 3)]);
        let feats = DenseMatrix::zeros(4, 1);
        let ds = GraphDataset::new(feats, a, vec![-1; 4], 2, vec![], vec![], vec![]).unwrap();
        assert_eq!(ds.edge_list(), vec![(0, 2), (1, 3)]);
        assert_eq!(ds.undirected_edge_count(), 2);
        assert!(ds.has_edge(3, 1));
        assert!(!ds.has_edge(0, 1));
    }
}
