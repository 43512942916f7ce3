//! CSR sparse matrices. These carry graph structure (normalized adjacency,
//! pooling operators, sparse feature tables) and are never differentiated.

use super::{DenseMatrix, NumError};

/// Compressed sparse row matrix of `f64`.
///
/// Invariants: `row_offsets` has `rows + 1` monotone entries ending at
/// `nnz()`, and column indices are strictly increasing within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from (row, col, value) triplets. Duplicate coordinates are
    /// summed; explicit zeros are kept (callers prune beforehand if needed).
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, NumError> {
        for &(r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(NumError::Invalid {
                    op: "from_triplets",
                    msg: format!("entry ({}, {}) outside {}x{}", r, c, rows, cols),
                });
            }
            if !v.is_finite() {
                return Err(NumError::NonFiniteInput { row: r, col: c });
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));

        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            match entries.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => entries.push((r, c, v)),
            }
        }

        let mut row_offsets = vec![0usize; rows + 1];
        for &(r, _, _) in &entries {
            row_offsets[r + 1] += 1;
        }
        for i in 0..rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        let (col_indices, values) = entries.into_iter().map(|(_, c, v)| (c, v)).unzip();
        let m = SparseMatrix { rows, cols, row_offsets, col_indices, values };
        m.validate()?;
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Keeps every non-zero entry of `dense`.
    pub fn from_dense(dense: &DenseMatrix) -> Self {
        let mut row_offsets = Vec::with_capacity(dense.rows() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for i in 0..dense.rows() {
            for (j, &v) in dense.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        SparseMatrix { rows: dense.rows(), cols: dense.cols(), row_offsets, col_indices, values }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (cols, vals) = self.row_entries(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out.set(r, c, v);
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_entries(&self, r: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row_entries(r);
        match cols.binary_search(&c) {
            Ok(idx) => vals[idx],
            Err(_) => 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), NumError> {
        if self.row_offsets.len() != self.rows + 1
            || self.row_offsets[0] != 0
            || *self.row_offsets.last().unwrap() != self.values.len()
            || self.col_indices.len() != self.values.len()
        {
            return Err(NumError::Invalid { op: "csr", msg: "inconsistent offsets".into() });
        }
        for r in 0..self.rows {
            if self.row_offsets[r] > self.row_offsets[r + 1] {
                return Err(NumError::Invalid { op: "csr", msg: format!("offsets decrease at row {}", r) });
            }
            let (cols, vals) = self.row_entries(r);
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(NumError::Invalid {
                        op: "csr",
                        msg: format!("columns not strictly increasing in row {}", r),
                    });
                }
            }
            for (&c, &v) in cols.iter().zip(vals) {
                if c >= self.cols {
                    return Err(NumError::Invalid { op: "csr", msg: format!("column {} out of range", c) });
                }
                if !v.is_finite() {
                    return Err(NumError::NonFiniteInput { row: r, col: c });
                }
            }
        }
        Ok(())
    }

    /// First (row, col) whose value differs from its mirror by more than
    /// `tol`, or `None` if the matrix is symmetric.
    pub fn asymmetry(&self, tol: f64) -> Option<(usize, usize)> {
        if self.rows != self.cols {
            return Some((0, 0));
        }
        for r in 0..self.rows {
            let (cols, vals) = self.row_entries(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if (v - self.get(c, r)).abs() > tol {
                    return Some((r, c));
                }
            }
        }
        None
    }

    /// `self * dense`. Each output row accumulates this row's entries in
    /// ascending column order.
    pub fn mul_dense(&self, dense: &DenseMatrix) -> Result<DenseMatrix, NumError> {
        if self.cols != dense.rows() {
            return Err(NumError::DimMismatch { op: "spmm", lhs: self.shape(), rhs: dense.shape() });
        }
        let n = dense.cols();
        let mut out = vec![0.0; self.rows * n];
        for r in 0..self.rows {
            let orow = &mut out[r * n..(r + 1) * n];
            let (cols, vals) = self.row_entries(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let drow = dense.row(c);
                for j in 0..n {
                    orow[j] += v * drow[j];
                }
            }
        }
        Ok(DenseMatrix::from_vec_unchecked(self.rows, n, out))
    }

    /// CSR transpose via counting sort; output rows keep ascending columns.
    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for i in 0..self.cols {
            counts[i + 1] += counts[i];
        }
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut next = counts.clone();
        for r in 0..self.rows {
            let (cols, vals) = self.row_entries(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c];
                next[c] += 1;
                col_indices[slot] = r;
                values[slot] = v;
            }
        }
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            row_offsets: counts,
            col_indices,
            values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_round_trip() {
        let s = SparseMatrix::from_triplets(3, 3, &[(0, 1, 2.0), (2, 0, -1.0), (1, 1, 3.0)]).unwrap();
        assert_eq!(s.nnz(), 3);
        assert_eq!(s.get(0, 1), 2.0);
        assert_eq!(s.get(2, 0), -1.0);
        assert_eq!(s.get(0, 0), 0.0);
        s.validate().unwrap();
    }

    #[test]
    fn duplicate_triplets_sum() {
        let s = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.5)]).unwrap();
        assert_eq!(s.nnz(), 1);
        assert_eq!(s.get(0, 0), 3.5);
    }

    #[test]
    fn mul_dense_matches_dense_matmul() {
        let s = SparseMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, -1.5)]).unwrap();
        let d = DenseMatrix::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let sparse_prod = s.mul_dense(&d).unwrap();
        let dense_prod = s.to_dense().matmul(&d).unwrap();
        assert_eq!(sparse_prod, dense_prod);
    }

    #[test]
    fn transpose_round_trip() {
        let s = SparseMatrix::from_triplets(3, 4, &[(0, 3, 1.0), (1, 0, 2.0), (2, 2, 3.0), (0, 1, 4.0)]).unwrap();
        let t = s.transpose();
        t.validate().unwrap();
        assert_eq!(t.shape(), (4, 3));
        assert_eq!(t.get(3, 0), 1.0);
        assert_eq!(t.get(0, 1), 2.0);
        assert_eq!(t.transpose(), s);
    }

    #[test]
    fn asymmetry_detects_direction() {
        let sym = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        assert_eq!(sym.asymmetry(0.0), None);
        let asym = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(asym.asymmetry(0.0), Some((0, 1)));
    }
}
