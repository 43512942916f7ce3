//! Row-major dense matrices.

use super::NumError;

/// Dense row-major matrix of `f64`.
///
/// Finiteness is an invariant: public constructors reject NaN and infinity,
/// and the arithmetic kernels re-check their outputs, so any matrix you can
/// hold is entirely finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumError> {
        if data.len() != rows * cols {
            return Err(NumError::Invalid {
                op: "new",
                msg: format!("{}x{} needs {} values, got {}", rows, cols, rows * cols, data.len()),
            });
        }
        let m = DenseMatrix { rows, cols, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumError> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(NumError::Invalid {
                    op: "from_rows",
                    msg: format!("ragged rows: expected {} cols, got {}", c, row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        DenseMatrix::new(r, c, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, NumError> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix::new(rows, cols, data)
    }

    /// Construction path for kernels that have already checked their output.
    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        DenseMatrix { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn check_finite(&self) -> Result<(), NumError> {
        for (idx, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(NumError::NonFiniteInput { row: idx / self.cols.max(1), col: idx % self.cols.max(1) });
            }
        }
        Ok(())
    }

    fn ensure_finite(self, op: &'static str) -> Result<Self, NumError> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(NumError::NonFinite { op })
        }
    }

    /// `self * other`, accumulating over the inner index in ascending order
    /// within each output row (the i-k-j loop), which pins the rounding.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, NumError> {
        if self.cols != other.rows {
            return Err(NumError::DimMismatch { op: "matmul", lhs: self.shape(), rhs: other.shape() });
        }
        let (m, k, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                for j in 0..n {
                    orow[j] += a * brow[j];
                }
            }
        }
        DenseMatrix::from_vec_unchecked(m, n, out).ensure_finite("matmul")
    }

    /// `self * other^T` without materializing the transpose. Each output
    /// entry is a single left-to-right dot product of two rows.
    pub fn matmul_bt(&self, other: &DenseMatrix) -> Result<DenseMatrix, NumError> {
        if self.cols != other.cols {
            return Err(NumError::DimMismatch { op: "matmul_bt", lhs: self.shape(), rhs: other.shape() });
        }
        let (m, k, n) = (self.rows, self.cols, other.rows);
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &other.data[j * k..(j + 1) * k];
                let mut acc = 0.0;
                for p in 0..k {
                    acc += arow[p] * brow[p];
                }
                out.push(acc);
            }
        }
        DenseMatrix::from_vec_unchecked(m, n, out).ensure_finite("matmul_bt")
    }

    /// `self^T * other`; used by backward passes. Accumulates into the output
    /// row by row of `self`, so the order is fixed by the row index.
    pub fn matmul_at(&self, other: &DenseMatrix) -> Result<DenseMatrix, NumError> {
        if self.rows != other.rows {
            return Err(NumError::DimMismatch { op: "matmul_at", lhs: self.shape(), rhs: other.shape() });
        }
        let (k, m, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let arow = &self.data[p * m..(p + 1) * m];
            let brow = &other.data[p * n..(p + 1) * n];
            for i in 0..m {
                let a = arow[i];
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += a * brow[j];
                }
            }
        }
        DenseMatrix::from_vec_unchecked(m, n, out).ensure_finite("matmul_at")
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = vec![0.0; self.rows * self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        DenseMatrix::from_vec_unchecked(self.cols, self.rows, out)
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix, NumError> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix, NumError> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &DenseMatrix) -> Result<DenseMatrix, NumError> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    fn zip_with(
        &self,
        other: &DenseMatrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<DenseMatrix, NumError> {
        if self.shape() != other.shape() {
            return Err(NumError::DimMismatch { op, lhs: self.shape(), rhs: other.shape() });
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        DenseMatrix::from_vec_unchecked(self.rows, self.cols, data).ensure_finite(op)
    }

    pub fn scale(&self, c: f64) -> Result<DenseMatrix, NumError> {
        let data = self.data.iter().map(|&v| v * c).collect();
        DenseMatrix::from_vec_unchecked(self.rows, self.cols, data).ensure_finite("scale")
    }

    /// Per-row maximum; each row must be non-empty.
    pub fn row_max(&self) -> DenseMatrix {
        debug_assert!(self.cols > 0);
        let mut out = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let row = self.row(i);
            out.push(row.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        DenseMatrix::from_vec_unchecked(self.rows, 1, out)
    }

    pub fn row_sums(&self) -> DenseMatrix {
        let mut out = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            out.push(self.row(i).iter().sum());
        }
        DenseMatrix::from_vec_unchecked(self.rows, 1, out)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Largest absolute entry-wise difference; matrices must share a shape.
    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = DenseMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = DenseMatrix::new(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn matmul_bt_matches_explicit_transpose() {
        let a = DenseMatrix::new(2, 3, vec![1.0, -2.0, 0.5, 3.0, 4.0, -1.0]).unwrap();
        let b = DenseMatrix::new(4, 3, vec![0.1, 0.2, 0.3, -1.0, 0.5, 2.0, 1.5, 0.0, 1.0, 2.0, -2.0, 0.25]).unwrap();
        let direct = a.matmul_bt(&b).unwrap();
        let via_t = a.matmul(&b.transpose()).unwrap();
        assert_eq!(direct, via_t);
    }

    #[test]
    fn matmul_at_matches_explicit_transpose() {
        let a = DenseMatrix::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = DenseMatrix::new(3, 4, vec![1.0; 12]).unwrap();
        let direct = a.matmul_at(&b).unwrap();
        let via_t = a.transpose().matmul(&b).unwrap();
        assert!(direct.max_abs_diff(&via_t) == 0.0);
    }

    #[test]
    fn rejects_nan() {
        let err = DenseMatrix::new(1, 2, vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, NumError::NonFiniteInput { row: 0, col: 1 }));
    }

    #[test]
    fn rejects_wrong_len() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn row_max_and_sums() {
        let m = DenseMatrix::new(2, 3, vec![1.0, 5.0, -2.0, 0.0, -1.0, -3.0]).unwrap();
        assert_eq!(m.row_max().data(), &[5.0, 0.0]);
        assert_eq!(m.row_sums().data(), &[4.0, -4.0]);
        assert_eq!(m.sum(), 0.0);
    }
}
