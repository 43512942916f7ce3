//! Reverse-mode autodiff on an arena tape.
//!
//! Nodes are appended in creation order and every op references earlier
//! nodes only, so walking the arena backwards is already a reverse
//! topological order: each node's gradient is complete before the walk
//! reaches it, and it is visited exactly once. No recursion, so encoder
//! depth can't overflow the stack.
//!
//! Gradient lifetime: `backward` seeds the scalar root with 1, propagates,
//! and frees every non-parameter gradient as soon as it has been consumed.
//! Parameter gradients persist and accumulate across `backward` calls until
//! the optimizer takes them.

use super::{DenseMatrix, NumError, SparseMatrix};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Handle to a sparse constant registered with the tape.
///
/// Sparse constants live in their own arena with its own watermark, so
/// permanent ones (normalized adjacencies, pooling operators) survive the
/// per-step truncation that reclaims temporaries; the transpose is cached at
/// registration for the backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparseId(usize);

#[derive(Debug, Clone)]
enum Op {
    Param,
    Constant,
    Matmul { a: NodeId, b: NodeId },
    /// a * b^T
    MatmulBt { a: NodeId, b: NodeId },
    Spmm { s: SparseId, b: NodeId },
    Relu { x: NodeId },
    Sigmoid { x: NodeId },
    Exp { x: NodeId },
    Log { x: NodeId },
    Sqrt { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    AddConst { x: NodeId },
    /// x[i][j] + v[i] for a column vector v
    AddCol { x: NodeId, v: NodeId },
    /// x[i][j] / v[i] for a column vector v
    DivCol { x: NodeId, v: NodeId },
    ClampMax { x: NodeId, hi: f64 },
    ConcatCols { a: NodeId, b: NodeId },
    RowInner { a: NodeId, b: NodeId },
    /// out[i][t] = a_i . b_{idx[i*k+t]}
    SampledInner { a: NodeId, b: NodeId, idx: Vec<usize>, k: usize },
    RowSoftmax { x: NodeId },
    RowSum { x: NodeId },
    ReduceSum { x: NodeId },
    GatherRows { x: NodeId, idx: Vec<usize> },
    /// Mean binary cross-entropy over logits, computed in stable form.
    BceMean { x: NodeId, targets: Vec<f64> },
}

struct TapeNode {
    op: Op,
    value: DenseMatrix,
    grad: Option<DenseMatrix>,
    requires_grad: bool,
    name: Option<String>,
}

/// Arena holding a computation graph.
pub struct Tape {
    nodes: Vec<TapeNode>,
    sparses: Vec<(SparseMatrix, SparseMatrix)>,
    params: Vec<NodeId>,
}

/// Snapshot of both arena lengths, taken with [`Tape::watermark`].
#[derive(Clone, Copy, Debug)]
pub struct Watermark {
    nodes: usize,
    sparses: usize,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), sparses: Vec::new(), params: Vec::new() }
    }

    /// Registers a trainable parameter. Its gradient accumulates across
    /// `backward` calls until the optimizer consumes it.
    pub fn param(&mut self, name: impl Into<String>, value: DenseMatrix) -> NodeId {
        let id = self.push(Op::Param, value, true);
        self.nodes[id.0].name = Some(name.into());
        self.params.push(id);
        id
    }

    /// Registers a constant input; it never receives a gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> NodeId {
        self.push(Op::Constant, value, false)
    }

    /// Registers a sparse constant, caching its transpose.
    pub fn add_sparse(&mut self, s: SparseMatrix) -> SparseId {
        let t = s.transpose();
        self.sparses.push((s, t));
        SparseId(self.sparses.len() - 1)
    }

    pub fn sparse(&self, id: SparseId) -> &SparseMatrix {
        &self.sparses[id.0].0
    }

    pub fn value(&self, id: NodeId) -> &DenseMatrix {
        &self.nodes[id.0].value
    }

    /// Scalar convenience accessor; panics if the node is not 1x1.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.shape(), (1, 1), "scalar() on a non-scalar node");
        v.get(0, 0)
    }

    pub fn grad(&self, id: NodeId) -> Option<&DenseMatrix> {
        self.nodes[id.0].grad.as_ref()
    }

    /// Replaces a node's value in place (weight restore, tied inits).
    pub fn set_value(&mut self, id: NodeId, value: DenseMatrix) -> Result<(), NumError> {
        let node = &mut self.nodes[id.0];
        if node.value.shape() != value.shape() {
            return Err(NumError::DimMismatch { op: "set_value", lhs: node.value.shape(), rhs: value.shape() });
        }
        node.value = value;
        Ok(())
    }

    pub fn zero_grad(&mut self, id: NodeId) {
        self.nodes[id.0].grad = None;
    }

    pub fn params(&self) -> &[NodeId] {
        &self.params
    }

    pub fn param_name(&self, id: NodeId) -> Option<&str> {
        self.nodes[id.0].name.as_deref()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Current arena lengths; pass to `truncate` to drop everything built
    /// after this point (one training step's graph).
    pub fn watermark(&self) -> Watermark {
        Watermark { nodes: self.nodes.len(), sparses: self.sparses.len() }
    }

    /// Drops every node and sparse constant registered at or above the mark.
    /// Parameters must all live below it; building a parameter inside a
    /// truncated region is a bug.
    pub fn truncate(&mut self, mark: Watermark) {
        assert!(
            self.params.iter().all(|p| p.0 < mark.nodes),
            "truncate would drop a parameter"
        );
        self.nodes.truncate(mark.nodes);
        self.sparses.truncate(mark.sparses);
    }

    fn push(&mut self, op: Op, value: DenseMatrix, requires_grad: bool) -> NodeId {
        self.nodes.push(TapeNode { op, value, grad: None, requires_grad, name: None });
        NodeId(self.nodes.len() - 1)
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    // ---- op constructors ----

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        let value = self.value(a).matmul(self.value(b))?;
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(Op::Matmul { a, b }, value, req))
    }

    /// `a * b^T`; the cross-view similarity kernel.
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        let value = self.value(a).matmul_bt(self.value(b))?;
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(Op::MatmulBt { a, b }, value, req))
    }

    /// Sparse-constant times dense node. The sparse side is never
    /// differentiated.
    pub fn spmm(&mut self, s: SparseId, b: NodeId) -> Result<NodeId, NumError> {
        let value = self.sparses[s.0].0.mul_dense(self.value(b))?;
        let req = self.requires(b);
        Ok(self.push(Op::Spmm { s, b }, value, req))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, NumError> {
        let value = {
            let v = self.value(x);
            let data = v.data().iter().map(|&a| if a > 0.0 { a } else { 0.0 }).collect();
            DenseMatrix::from_vec_unchecked(v.rows(), v.cols(), data)
        };
        let req = self.requires(x);
        Ok(self.push(Op::Relu { x }, value, req))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, NumError> {
        let value = {
            let v = self.value(x);
            let data = v.data().iter().map(|&a| sigmoid_scalar(a)).collect();
            DenseMatrix::from_vec_unchecked(v.rows(), v.cols(), data)
        };
        let req = self.requires(x);
        Ok(self.push(Op::Sigmoid { x }, value, req))
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId, NumError> {
        let value = {
            let v = self.value(x);
            let mut data = Vec::with_capacity(v.data().len());
            for &a in v.data() {
                let e = a.exp();
                if !e.is_finite() {
                    return Err(NumError::NonFinite { op: "exp" });
                }
                data.push(e);
            }
            DenseMatrix::from_vec_unchecked(v.rows(), v.cols(), data)
        };
        let req = self.requires(x);
        Ok(self.push(Op::Exp { x }, value, req))
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId, NumError> {
        let value = {
            let v = self.value(x);
            let cols = v.cols();
            let mut data = Vec::with_capacity(v.data().len());
            for (idx, &a) in v.data().iter().enumerate() {
                if a <= 0.0 {
                    return Err(NumError::LogDomain { row: idx / cols, col: idx % cols, value: a });
                }
                data.push(a.ln());
            }
            DenseMatrix::from_vec_unchecked(v.rows(), v.cols(), data)
        };
        let req = self.requires(x);
        Ok(self.push(Op::Log { x }, value, req))
    }

    /// Elementwise square root; entries must be strictly positive so the
    /// derivative stays finite.
    pub fn sqrt(&mut self, x: NodeId) -> Result<NodeId, NumError> {
        let value = {
            let v = self.value(x);
            let mut data = Vec::with_capacity(v.data().len());
            for &a in v.data() {
                if a <= 0.0 {
                    return Err(NumError::Invalid { op: "sqrt", msg: format!("non-positive entry {}", a) });
                }
                data.push(a.sqrt());
            }
            DenseMatrix::from_vec_unchecked(v.rows(), v.cols(), data)
        };
        let req = self.requires(x);
        Ok(self.push(Op::Sqrt { x }, value, req))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        let value = self.value(a).add(self.value(b))?;
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(Op::Add { a, b }, value, req))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        let value = self.value(a).hadamard(self.value(b))?;
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(Op::Mul { a, b }, value, req))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId, NumError> {
        if !c.is_finite() {
            return Err(NumError::Invalid { op: "scale", msg: format!("non-finite factor {}", c) });
        }
        let value = self.value(x).scale(c)?;
        let req = self.requires(x);
        Ok(self.push(Op::Scale { x, c }, value, req))
    }

    pub fn add_const(&mut self, x: NodeId, c: f64) -> Result<NodeId, NumError> {
        if !c.is_finite() {
            return Err(NumError::Invalid { op: "add_const", msg: format!("non-finite addend {}", c) });
        }
        let value = {
            let v = self.value(x);
            let data = v.data().iter().map(|&a| a + c).collect();
            DenseMatrix::from_vec_unchecked(v.rows(), v.cols(), data)
        };
        let req = self.requires(x);
        Ok(self.push(Op::AddConst { x }, value, req))
    }

    /// Adds column vector `v` to every column of `x`.
    pub fn add_col(&mut self, x: NodeId, v: NodeId) -> Result<NodeId, NumError> {
        let (xv, vv) = (self.value(x), self.value(v));
        if vv.cols() != 1 || vv.rows() != xv.rows() {
            return Err(NumError::DimMismatch { op: "add_col", lhs: xv.shape(), rhs: vv.shape() });
        }
        let mut data = Vec::with_capacity(xv.data().len());
        for i in 0..xv.rows() {
            let add = vv.get(i, 0);
            for &a in xv.row(i) {
                data.push(a + add);
            }
        }
        let value = DenseMatrix::from_vec_unchecked(xv.rows(), xv.cols(), data);
        let req = self.requires(x) || self.requires(v);
        Ok(self.push(Op::AddCol { x, v }, value, req))
    }

    /// Divides each row of `x` by the matching entry of column vector `v`.
    pub fn div_col(&mut self, x: NodeId, v: NodeId) -> Result<NodeId, NumError> {
        let (xv, vv) = (self.value(x), self.value(v));
        if vv.cols() != 1 || vv.rows() != xv.rows() {
            return Err(NumError::DimMismatch { op: "div_col", lhs: xv.shape(), rhs: vv.shape() });
        }
        let mut data = Vec::with_capacity(xv.data().len());
        for i in 0..xv.rows() {
            let d = vv.get(i, 0);
            if d == 0.0 {
                return Err(NumError::Invalid { op: "div_col", msg: format!("zero divisor at row {}", i) });
            }
            for &a in xv.row(i) {
                let q = a / d;
                if !q.is_finite() {
                    return Err(NumError::NonFinite { op: "div_col" });
                }
                data.push(q);
            }
        }
        let value = DenseMatrix::from_vec_unchecked(xv.rows(), xv.cols(), data);
        let req = self.requires(x) || self.requires(v);
        Ok(self.push(Op::DivCol { x, v }, value, req))
    }

    /// min(x, hi). Gradient passes where x <= hi, so the active maximum of a
    /// shifted log-sum-exp (which sits exactly at hi) keeps its gradient.
    pub fn clamp_max(&mut self, x: NodeId, hi: f64) -> Result<NodeId, NumError> {
        if !hi.is_finite() {
            return Err(NumError::Invalid { op: "clamp_max", msg: format!("non-finite bound {}", hi) });
        }
        let value = {
            let v = self.value(x);
            let data = v.data().iter().map(|&a| a.min(hi)).collect();
            DenseMatrix::from_vec_unchecked(v.rows(), v.cols(), data)
        };
        let req = self.requires(x);
        Ok(self.push(Op::ClampMax { x, hi }, value, req))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(NumError::DimMismatch { op: "concat_cols", lhs: av.shape(), rhs: bv.shape() });
        }
        let cols = av.cols() + bv.cols();
        let mut data = Vec::with_capacity(av.rows() * cols);
        for i in 0..av.rows() {
            data.extend_from_slice(av.row(i));
            data.extend_from_slice(bv.row(i));
        }
        let value = DenseMatrix::from_vec_unchecked(av.rows(), cols, data);
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(Op::ConcatCols { a, b }, value, req))
    }

    /// Row-wise inner products of two same-shape matrices; returns a column.
    pub fn row_inner_products(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(NumError::DimMismatch { op: "row_inner_products", lhs: av.shape(), rhs: bv.shape() });
        }
        let mut data = Vec::with_capacity(av.rows());
        for i in 0..av.rows() {
            let mut acc = 0.0;
            for (&x, &y) in av.row(i).iter().zip(bv.row(i)) {
                acc += x * y;
            }
            data.push(acc);
        }
        let value = DenseMatrix::from_vec_unchecked(av.rows(), 1, data);
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(Op::RowInner { a, b }, value, req))
    }

    /// out[i][t] = a_i . b_{idx[i*k+t]}: per-row inner products against k
    /// sampled rows of `b`. Backs the subsampled contrastive estimator
    /// without forming the full similarity matrix.
    pub fn sampled_inner(
        &mut self,
        a: NodeId,
        b: NodeId,
        idx: Vec<usize>,
        k: usize,
    ) -> Result<NodeId, NumError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(NumError::DimMismatch { op: "sampled_inner", lhs: av.shape(), rhs: bv.shape() });
        }
        if idx.len() != av.rows() * k {
            return Err(NumError::Invalid {
                op: "sampled_inner",
                msg: format!("index table has {} entries, need {}", idx.len(), av.rows() * k),
            });
        }
        if let Some(&bad) = idx.iter().find(|&&j| j >= bv.rows()) {
            return Err(NumError::Invalid { op: "sampled_inner", msg: format!("index {} out of range", bad) });
        }
        let mut data = Vec::with_capacity(av.rows() * k);
        for i in 0..av.rows() {
            let arow = av.row(i);
            for t in 0..k {
                let brow = bv.row(idx[i * k + t]);
                let mut acc = 0.0;
                for (&x, &y) in arow.iter().zip(brow) {
                    acc += x * y;
                }
                data.push(acc);
            }
        }
        let value = DenseMatrix::from_vec_unchecked(av.rows(), k, data);
        let req = self.requires(a) || self.requires(b);
        Ok(self.push(Op::SampledInner { a, b, idx, k }, value, req))
    }

    /// Max-subtracted softmax along each row.
    pub fn row_softmax(&mut self, x: NodeId) -> Result<NodeId, NumError> {
        let value = {
            let v = self.value(x);
            if v.cols() == 0 {
                return Err(NumError::Invalid { op: "row_softmax", msg: "empty rows".into() });
            }
            let mut data = Vec::with_capacity(v.data().len());
            for i in 0..v.rows() {
                let row = v.row(i);
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let start = data.len();
                let mut sum = 0.0;
                for &a in row {
                    let e = (a - m).exp();
                    sum += e;
                    data.push(e);
                }
                for e in &mut data[start..] {
                    *e /= sum;
                }
            }
            DenseMatrix::from_vec_unchecked(v.rows(), v.cols(), data)
        };
        let req = self.requires(x);
        Ok(self.push(Op::RowSoftmax { x }, value, req))
    }

    pub fn row_sum(&mut self, x: NodeId) -> Result<NodeId, NumError> {
        let value = self.value(x).row_sums();
        let req = self.requires(x);
        Ok(self.push(Op::RowSum { x }, value, req))
    }

    pub fn reduce_sum(&mut self, x: NodeId) -> Result<NodeId, NumError> {
        let total = self.value(x).sum();
        if !total.is_finite() {
            return Err(NumError::NonFinite { op: "reduce_sum" });
        }
        let value = DenseMatrix::from_vec_unchecked(1, 1, vec![total]);
        let req = self.requires(x);
        Ok(self.push(Op::ReduceSum { x }, value, req))
    }

    /// Selects rows of `x` in the given order (repeats allowed).
    pub fn gather_rows(&mut self, x: NodeId, idx: Vec<usize>) -> Result<NodeId, NumError> {
        let xv = self.value(x);
        if let Some(&bad) = idx.iter().find(|&&r| r >= xv.rows()) {
            return Err(NumError::Invalid { op: "gather_rows", msg: format!("row {} out of range", bad) });
        }
        let mut data = Vec::with_capacity(idx.len() * xv.cols());
        for &r in &idx {
            data.extend_from_slice(xv.row(r));
        }
        let value = DenseMatrix::from_vec_unchecked(idx.len(), xv.cols(), data);
        let req = self.requires(x);
        Ok(self.push(Op::GatherRows { x, idx }, value, req))
    }

    /// Mean binary cross-entropy of a logit column against 0/1 targets,
    /// evaluated as softplus((1-2y)x) so large logits cannot overflow.
    pub fn bce_with_logits_mean(&mut self, x: NodeId, targets: Vec<f64>) -> Result<NodeId, NumError> {
        let xv = self.value(x);
        if xv.cols() != 1 || xv.rows() != targets.len() || targets.is_empty() {
            return Err(NumError::Invalid {
                op: "bce_with_logits_mean",
                msg: format!("logits {}x{} vs {} targets", xv.rows(), xv.cols(), targets.len()),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t != 0.0 && t != 1.0) {
            return Err(NumError::Invalid { op: "bce_with_logits_mean", msg: format!("target {} not in {{0,1}}", bad) });
        }
        let mut total = 0.0;
        for (i, &y) in targets.iter().enumerate() {
            total += softplus((1.0 - 2.0 * y) * xv.get(i, 0));
        }
        let value = DenseMatrix::from_vec_unchecked(1, 1, vec![total / targets.len() as f64]);
        let req = self.requires(x);
        Ok(self.push(Op::BceMean { x, targets }, value, req))
    }

    // ---- backward ----

    /// Seeds `root` (which must be 1x1) with gradient 1 and propagates to
    /// every reachable parameter. Parameter gradients accumulate;
    /// intermediate gradients are freed as soon as they are consumed.
    pub fn backward(&mut self, root: NodeId) -> Result<(), NumError> {
        let shape = self.value(root).shape();
        if shape != (1, 1) {
            return Err(NumError::NonScalarRoot { rows: shape.0, cols: shape.1 });
        }
        self.seed_grad(root, DenseMatrix::from_vec_unchecked(1, 1, vec![1.0]));

        for i in (0..=root.0).rev() {
            if matches!(self.nodes[i].op, Op::Param | Op::Constant) {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else { continue };
            self.propagate(i, &g);
            // g drops here: interior gradients are complete once reached.
        }
        Ok(())
    }

    fn seed_grad(&mut self, id: NodeId, delta: DenseMatrix) {
        match &mut self.nodes[id.0].grad {
            Some(g) => {
                let gd = g.data_mut();
                for (acc, d) in gd.iter_mut().zip(delta.data()) {
                    *acc += d;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn add_grad(&mut self, id: NodeId, delta: DenseMatrix) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        debug_assert_eq!(self.nodes[id.0].value.shape(), delta.shape());
        self.seed_grad(id, delta);
    }

    fn propagate(&mut self, i: usize, g: &DenseMatrix) {
        // Deltas are computed against immutable borrows, then applied.
        let mut deltas: Vec<(NodeId, DenseMatrix)> = Vec::with_capacity(2);
        {
            let node = &self.nodes[i];
            let val = |id: NodeId| &self.nodes[id.0].value;
            let want = |id: NodeId| self.nodes[id.0].requires_grad;
            match &node.op {
                Op::Param | Op::Constant => {}
                Op::Matmul { a, b } => {
                    if want(*a) {
                        deltas.push((*a, g.matmul_bt(val(*b)).expect("backward matmul")));
                    }
                    if want(*b) {
                        deltas.push((*b, val(*a).matmul_at(g).expect("backward matmul")));
                    }
                }
                Op::MatmulBt { a, b } => {
                    if want(*a) {
                        deltas.push((*a, g.matmul(val(*b)).expect("backward matmul_bt")));
                    }
                    if want(*b) {
                        deltas.push((*b, g.matmul_at(val(*a)).expect("backward matmul_bt")));
                    }
                }
                Op::Spmm { s, b } => {
                    if want(*b) {
                        let st = &self.sparses[s.0].1;
                        deltas.push((*b, st.mul_dense(g).expect("backward spmm")));
                    }
                }
                Op::Relu { x } => {
                    if want(*x) {
                        let xv = val(*x);
                        let data = g
                            .data()
                            .iter()
                            .zip(xv.data())
                            .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                            .collect();
                        deltas.push((*x, DenseMatrix::from_vec_unchecked(xv.rows(), xv.cols(), data)));
                    }
                }
                Op::Sigmoid { x } => {
                    if want(*x) {
                        let out = &node.value;
                        let data = g
                            .data()
                            .iter()
                            .zip(out.data())
                            .map(|(&gi, &s)| gi * s * (1.0 - s))
                            .collect();
                        deltas.push((*x, DenseMatrix::from_vec_unchecked(out.rows(), out.cols(), data)));
                    }
                }
                Op::Exp { x } => {
                    if want(*x) {
                        let out = &node.value;
                        let data = g.data().iter().zip(out.data()).map(|(&gi, &e)| gi * e).collect();
                        deltas.push((*x, DenseMatrix::from_vec_unchecked(out.rows(), out.cols(), data)));
                    }
                }
                Op::Log { x } => {
                    if want(*x) {
                        let xv = val(*x);
                        let data = g.data().iter().zip(xv.data()).map(|(&gi, &xi)| gi / xi).collect();
                        deltas.push((*x, DenseMatrix::from_vec_unchecked(xv.rows(), xv.cols(), data)));
                    }
                }
                Op::Sqrt { x } => {
                    if want(*x) {
                        let out = &node.value;
                        let data = g.data().iter().zip(out.data()).map(|(&gi, &r)| gi * 0.5 / r).collect();
                        deltas.push((*x, DenseMatrix::from_vec_unchecked(out.rows(), out.cols(), data)));
                    }
                }
                Op::Add { a, b } => {
                    if want(*a) {
                        deltas.push((*a, g.clone()));
                    }
                    if want(*b) {
                        deltas.push((*b, g.clone()));
                    }
                }
                Op::Mul { a, b } => {
                    if want(*a) {
                        deltas.push((*a, g.hadamard(val(*b)).expect("backward mul")));
                    }
                    if want(*b) {
                        deltas.push((*b, g.hadamard(val(*a)).expect("backward mul")));
                    }
                }
                Op::Scale { x, c } => {
                    if want(*x) {
                        deltas.push((*x, g.scale(*c).expect("backward scale")));
                    }
                }
                Op::AddConst { x } => {
                    if want(*x) {
                        deltas.push((*x, g.clone()));
                    }
                }
                Op::AddCol { x, v } => {
                    if want(*x) {
                        deltas.push((*x, g.clone()));
                    }
                    if want(*v) {
                        deltas.push((*v, g.row_sums()));
                    }
                }
                Op::DivCol { x, v } => {
                    let vv = val(*v);
                    if want(*x) {
                        let mut data = Vec::with_capacity(g.data().len());
                        for r in 0..g.rows() {
                            let d = vv.get(r, 0);
                            for &gi in g.row(r) {
                                data.push(gi / d);
                            }
                        }
                        deltas.push((*x, DenseMatrix::from_vec_unchecked(g.rows(), g.cols(), data)));
                    }
                    if want(*v) {
                        let xv = val(*x);
                        let mut data = Vec::with_capacity(g.rows());
                        for r in 0..g.rows() {
                            let d = vv.get(r, 0);
                            let mut acc = 0.0;
                            for (&gi, &xi) in g.row(r).iter().zip(xv.row(r)) {
                                acc += gi * xi;
                            }
                            data.push(-acc / (d * d));
                        }
                        deltas.push((*v, DenseMatrix::from_vec_unchecked(g.rows(), 1, data)));
                    }
                }
                Op::ClampMax { x, hi } => {
                    if want(*x) {
                        let xv = val(*x);
                        let data = g
                            .data()
                            .iter()
                            .zip(xv.data())
                            .map(|(&gi, &xi)| if xi <= *hi { gi } else { 0.0 })
                            .collect();
                        deltas.push((*x, DenseMatrix::from_vec_unchecked(xv.rows(), xv.cols(), data)));
                    }
                }
                Op::ConcatCols { a, b } => {
                    let (ac, bc) = (val(*a).cols(), val(*b).cols());
                    if want(*a) {
                        let mut data = Vec::with_capacity(g.rows() * ac);
                        for r in 0..g.rows() {
                            data.extend_from_slice(&g.row(r)[..ac]);
                        }
                        deltas.push((*a, DenseMatrix::from_vec_unchecked(g.rows(), ac, data)));
                    }
                    if want(*b) {
                        let mut data = Vec::with_capacity(g.rows() * bc);
                        for r in 0..g.rows() {
                            data.extend_from_slice(&g.row(r)[ac..]);
                        }
                        deltas.push((*b, DenseMatrix::from_vec_unchecked(g.rows(), bc, data)));
                    }
                }
                Op::RowInner { a, b } => {
                    let (av, bv) = (val(*a), val(*b));
                    if want(*a) {
                        let mut data = Vec::with_capacity(av.data().len());
                        for r in 0..av.rows() {
                            let gi = g.get(r, 0);
                            for &bij in bv.row(r) {
                                data.push(gi * bij);
                            }
                        }
                        deltas.push((*a, DenseMatrix::from_vec_unchecked(av.rows(), av.cols(), data)));
                    }
                    if want(*b) {
                        let mut data = Vec::with_capacity(bv.data().len());
                        for r in 0..bv.rows() {
                            let gi = g.get(r, 0);
                            for &aij in av.row(r) {
                                data.push(gi * aij);
                            }
                        }
                        deltas.push((*b, DenseMatrix::from_vec_unchecked(bv.rows(), bv.cols(), data)));
                    }
                }
                Op::SampledInner { a, b, idx, k } => {
                    let (av, bv) = (val(*a), val(*b));
                    if want(*a) {
                        let mut da = DenseMatrix::zeros(av.rows(), av.cols());
                        for r in 0..av.rows() {
                            for t in 0..*k {
                                let gi = g.get(r, t);
                                if gi == 0.0 {
                                    continue;
                                }
                                let brow = bv.row(idx[r * k + t]);
                                let darow = &mut da.data_mut()[r * av.cols()..(r + 1) * av.cols()];
                                for (slot, &bj) in darow.iter_mut().zip(brow) {
                                    *slot += gi * bj;
                                }
                            }
                        }
                        deltas.push((*a, da));
                    }
                    if want(*b) {
                        let mut db = DenseMatrix::zeros(bv.rows(), bv.cols());
                        for r in 0..av.rows() {
                            let arow = av.row(r);
                            for t in 0..*k {
                                let gi = g.get(r, t);
                                if gi == 0.0 {
                                    continue;
                                }
                                let j = idx[r * k + t];
                                let dbrow = &mut db.data_mut()[j * bv.cols()..(j + 1) * bv.cols()];
                                for (slot, &aj) in dbrow.iter_mut().zip(arow) {
                                    *slot += gi * aj;
                                }
                            }
                        }
                        deltas.push((*b, db));
                    }
                }
                Op::RowSoftmax { x } => {
                    if want(*x) {
                        let p = &node.value;
                        let mut data = Vec::with_capacity(p.data().len());
                        for r in 0..p.rows() {
                            let grow = g.row(r);
                            let prow = p.row(r);
                            let mut dot = 0.0;
                            for (&gi, &pi) in grow.iter().zip(prow) {
                                dot += gi * pi;
                            }
                            for (&gi, &pi) in grow.iter().zip(prow) {
                                data.push(pi * (gi - dot));
                            }
                        }
                        deltas.push((*x, DenseMatrix::from_vec_unchecked(p.rows(), p.cols(), data)));
                    }
                }
                Op::RowSum { x } => {
                    if want(*x) {
                        let xv = val(*x);
                        let mut data = Vec::with_capacity(xv.data().len());
                        for r in 0..xv.rows() {
                            let gi = g.get(r, 0);
                            data.extend(std::iter::repeat(gi).take(xv.cols()));
                        }
                        deltas.push((*x, DenseMatrix::from_vec_unchecked(xv.rows(), xv.cols(), data)));
                    }
                }
                Op::ReduceSum { x } => {
                    if want(*x) {
                        let xv = val(*x);
                        let gi = g.get(0, 0);
                        let data = vec![gi; xv.data().len()];
                        deltas.push((*x, DenseMatrix::from_vec_unchecked(xv.rows(), xv.cols(), data)));
                    }
                }
                Op::GatherRows { x, idx } => {
                    if want(*x) {
                        let xv = val(*x);
                        let mut dx = DenseMatrix::zeros(xv.rows(), xv.cols());
                        for (r, &src) in idx.iter().enumerate() {
                            let grow = g.row(r);
                            let drow = &mut dx.data_mut()[src * xv.cols()..(src + 1) * xv.cols()];
                            for (slot, &gi) in drow.iter_mut().zip(grow) {
                                *slot += gi;
                            }
                        }
                        deltas.push((*x, dx));
                    }
                }
                Op::BceMean { x, targets } => {
                    if want(*x) {
                        let xv = val(*x);
                        let gi = g.get(0, 0);
                        let m = targets.len() as f64;
                        let mut data = Vec::with_capacity(targets.len());
                        for (r, &y) in targets.iter().enumerate() {
                            data.push(gi * (sigmoid_scalar(xv.get(r, 0)) - y) / m);
                        }
                        deltas.push((*x, DenseMatrix::from_vec_unchecked(targets.len(), 1, data)));
                    }
                }
            }
        }
        for (pid, d) in deltas {
            self.add_grad(pid, d);
        }
    }
}

#[inline]
fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Central finite-difference check of `backward`.
///
/// `build` must construct the same scalar graph each call from the given
/// parameter values (registering them via `Tape::param` in order). Returns
/// the worst relative error between analytic and numeric gradients over all
/// parameter entries, using step `h` and `rel = |a-n| / max(1, |a|, |n|)`.
pub fn grad_check(
    build: &dyn Fn(&mut Tape, &[DenseMatrix]) -> Result<NodeId, NumError>,
    inits: &[DenseMatrix],
    h: f64,
) -> Result<f64, NumError> {
    let mut tape = Tape::new();
    let root = build(&mut tape, inits)?;
    tape.backward(root)?;
    let analytic: Vec<DenseMatrix> = tape
        .params()
        .iter()
        .map(|&p| tape.grad(p).cloned().unwrap_or_else(|| DenseMatrix::zeros(tape.value(p).rows(), tape.value(p).cols())))
        .collect();
    if analytic.len() != inits.len() {
        return Err(NumError::Invalid {
            op: "grad_check",
            msg: format!("build registered {} params, expected {}", analytic.len(), inits.len()),
        });
    }

    let eval = |vals: &[DenseMatrix]| -> Result<f64, NumError> {
        let mut t = Tape::new();
        let root = build(&mut t, vals)?;
        Ok(t.scalar(root))
    };

    let mut worst: f64 = 0.0;
    for (pi, init) in inits.iter().enumerate() {
        for idx in 0..init.data().len() {
            let mut plus = inits.to_vec();
            plus[pi].data_mut()[idx] += h;
            let mut minus = inits.to_vec();
            minus[pi].data_mut()[idx] -= h;
            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
            let a = analytic[pi].data()[idx];
            let rel = (a - numeric).abs() / 1.0_f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DenseMatrix {
        DenseMatrix::new(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut t = Tape::new();
        let i2 = t.constant(DenseMatrix::identity(2));
        let m = t.constant(mat(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let out = t.matmul(i2, m).unwrap();
        assert_eq!(t.value(out), t.value(m));
    }

    #[test]
    fn matmul_hand_example() {
        let mut t = Tape::new();
        let a = t.constant(mat(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let b = t.constant(mat(2, 1, &[1.0, 1.0]));
        let out = t.matmul(a, b).unwrap();
        assert_eq!(t.value(out).data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(DenseMatrix::zeros(2, 3));
        let b = t.constant(DenseMatrix::zeros(2, 3));
        match t.matmul(a, b) {
            Err(NumError::DimMismatch { lhs, rhs, .. }) => {
                assert_eq!(lhs, (2, 3));
                assert_eq!(rhs, (2, 3));
            }
            other => panic!("expected dimension error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn matmul_grad_row_sum_pattern() {
        // d sum(A x [[1],[1]]) / dA = all-ones.
        let mut t = Tape::new();
        let a = t.param("a", mat(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let b = t.constant(mat(2, 1, &[1.0, 1.0]));
        let prod = t.matmul(a, b).unwrap();
        let loss = t.reduce_sum(prod).unwrap();
        t.backward(loss).unwrap();
        assert_eq!(t.grad(a).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn spmm_matches_dense_and_identity() {
        let mut t = Tape::new();
        let m = t.param("m", mat(2, 1, &[2.0, 4.0]));
        let id = t.add_sparse(SparseMatrix::identity(2));
        let out = t.spmm(id, m).unwrap();
        assert_eq!(t.value(out).data(), &[2.0, 4.0]);

        let half = SparseMatrix::from_triplets(2, 2, &[(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)]).unwrap();
        let hid = t.add_sparse(half);
        let out2 = t.spmm(hid, m).unwrap();
        assert_eq!(t.value(out2).data(), &[3.0, 3.0]);
    }

    #[test]
    fn spmm_equals_densified_matmul_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let mut trips = Vec::new();
            for r in 0..8 {
                for c in 0..8 {
                    if rng.gen_bool(0.3) {
                        trips.push((r, c, rng.gen_range(-2.0..2.0)));
                    }
                }
            }
            let s = SparseMatrix::from_triplets(8, 8, &trips).unwrap();
            let dense = DenseMatrix::from_fn(8, 5, |_, _| rng.gen_range(-1.0..1.0)).unwrap();
            let mut t = Tape::new();
            let b = t.constant(dense.clone());
            let sid = t.add_sparse(s.clone());
            let via_sparse = t.spmm(sid, b).unwrap();
            let sd = t.constant(s.to_dense());
            let via_dense = t.matmul(sd, b).unwrap();
            // Same summation order within each row: exact equality.
            assert_eq!(t.value(via_sparse), t.value(via_dense));
        }
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut t = Tape::new();
        let x = t.constant(mat(1, 1, &[0.0]));
        let s = t.sigmoid(x).unwrap();
        assert_eq!(t.scalar(s), 0.5);
    }

    #[test]
    fn row_softmax_constant_row() {
        let mut t = Tape::new();
        let x = t.constant(mat(1, 4, &[3.0, 3.0, 3.0, 3.0]));
        let p = t.row_softmax(x).unwrap();
        for &v in t.value(p).data() {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn relu_gradient_values() {
        let mut t = Tape::new();
        let x = t.param("x", mat(1, 2, &[-1.0, 2.0]));
        let r = t.relu(x).unwrap();
        let loss = t.reduce_sum(r).unwrap();
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.param("x", mat(2, 2, &[1.0; 4]));
        match t.backward(x) {
            Err(NumError::NonScalarRoot { rows: 2, cols: 2 }) => {}
            other => panic!("expected non-scalar error, got {:?}", other),
        }
    }

    #[test]
    fn sum_of_param_gives_ones_and_accumulates() {
        let mut t = Tape::new();
        let w = t.param("w", mat(2, 3, &[0.5; 6]));
        let loss = t.reduce_sum(w).unwrap();
        t.backward(loss).unwrap();
        assert_eq!(t.grad(w).unwrap().data(), &[1.0; 6]);
        // Second backward without zeroing: gradients add up.
        t.backward(loss).unwrap();
        assert_eq!(t.grad(w).unwrap().data(), &[2.0; 6]);
    }

    #[test]
    fn disconnected_param_has_no_gradient() {
        let mut t = Tape::new();
        let used = t.param("used", mat(1, 1, &[2.0]));
        let unused = t.param("unused", mat(1, 1, &[5.0]));
        let loss = t.reduce_sum(used).unwrap();
        t.backward(loss).unwrap();
        assert!(t.grad(unused).is_none());
        assert!(t.grad(used).is_some());
    }

    #[test]
    fn shared_subexpression_matches_tree_expansion() {
        // loss = sum(s) + sum(s) with s shared, vs rebuilt twice.
        let init = mat(2, 2, &[0.3, -0.7, 1.1, 0.4]);
        let mut shared = Tape::new();
        let w = shared.param("w", init.clone());
        let s = shared.mul(w, w).unwrap();
        let s1 = shared.reduce_sum(s).unwrap();
        let total = shared.add(s1, s1).unwrap();
        shared.backward(total).unwrap();
        let g_shared = shared.grad(w).unwrap().clone();

        let mut tree = Tape::new();
        let w2 = tree.param("w", init);
        let sa = tree.mul(w2, w2).unwrap();
        let sb = tree.mul(w2, w2).unwrap();
        let ta = tree.reduce_sum(sa).unwrap();
        let tb = tree.reduce_sum(sb).unwrap();
        let total2 = tree.add(ta, tb).unwrap();
        tree.backward(total2).unwrap();
        let g_tree = tree.grad(w2).unwrap().clone();

        assert_eq!(g_shared, g_tree);
    }

    #[test]
    fn log_domain_error_locates_entry() {
        let mut t = Tape::new();
        let x = t.constant(mat(2, 2, &[1.0, 2.0, -3.0, 4.0]));
        match t.log(x) {
            Err(NumError::LogDomain { row: 1, col: 0, value }) => assert_eq!(value, -3.0),
            other => panic!("expected log domain error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn truncate_drops_step_graph() {
        let mut t = Tape::new();
        let w = t.param("w", mat(1, 1, &[1.0]));
        let mark = t.watermark();
        for _ in 0..3 {
            let s = t.mul(w, w).unwrap();
            let loss = t.reduce_sum(s).unwrap();
            t.backward(loss).unwrap();
            t.truncate(mark);
        }
        assert_eq!(t.node_count(), 1);
        // Three accumulated backward passes of d(w^2)=2w at w=1.
        assert_eq!(t.grad(w).unwrap().data(), &[6.0]);
    }

    #[test]
    #[should_panic(expected = "truncate would drop a parameter")]
    fn truncate_protects_params() {
        let mut t = Tape::new();
        let mark = t.watermark();
        let _w = t.param("w", mat(1, 1, &[1.0]));
        t.truncate(mark);
    }

    #[test]
    fn gather_rows_scatter_adds() {
        let mut t = Tape::new();
        let x = t.param("x", mat(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let gathered = t.gather_rows(x, vec![2, 0, 2]).unwrap();
        assert_eq!(t.value(gathered).data(), &[5.0, 6.0, 1.0, 2.0, 5.0, 6.0]);
        let loss = t.reduce_sum(gathered).unwrap();
        t.backward(loss).unwrap();
        // Row 2 was gathered twice.
        assert_eq!(t.grad(x).unwrap().data(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn bce_known_values() {
        // Logit 0 against either target: ln 2. Logit 2 against 1: ln(1+e^-2).
        let mut t = Tape::new();
        let x0 = t.constant(mat(1, 1, &[0.0]));
        let l0 = t.bce_with_logits_mean(x0, vec![1.0]).unwrap();
        assert!((t.scalar(l0) - std::f64::consts::LN_2).abs() < 1e-15);

        let x2 = t.constant(mat(1, 1, &[2.0]));
        let l2 = t.bce_with_logits_mean(x2, vec![1.0]).unwrap();
        assert!((t.scalar(l2) - 0.126928011042972).abs() < 1e-12);
    }

    #[test]
    fn bce_extreme_logits_stay_finite() {
        let mut t = Tape::new();
        let x = t.param("x", mat(2, 1, &[800.0, -800.0]));
        let l = t.bce_with_logits_mean(x, vec![0.0, 1.0]).unwrap();
        assert!(t.scalar(l).is_finite());
        t.backward(l).unwrap();
        assert!(t.grad(x).unwrap().data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn sampled_inner_matches_direct_products() {
        let mut t = Tape::new();
        let a = t.constant(mat(2, 3, &[1.0, 0.0, 2.0, -1.0, 1.0, 0.5]));
        let b = t.constant(mat(4, 3, &[1.0, 1.0, 1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 1.0, 0.5, 0.5, 0.5]));
        let out = t.sampled_inner(a, b, vec![0, 2, 1, 3], 2).unwrap();
        // Row 0 against b0, b2; row 1 against b1, b3.
        assert_eq!(t.value(out).data(), &[3.0, 5.0, 2.0, 0.25]);
    }

    fn fd(build: &dyn Fn(&mut Tape, &[DenseMatrix]) -> Result<NodeId, NumError>, inits: &[DenseMatrix]) {
        let worst = grad_check(build, inits, 1e-5).unwrap();
        assert!(worst < 1e-4, "finite-difference mismatch: rel err {}", worst);
    }

    #[test]
    fn fd_matmul_chain() {
        let a = mat(3, 2, &[0.2, -0.4, 1.3, 0.7, -0.9, 0.1]);
        let b = mat(2, 4, &[0.5, -0.2, 0.8, 0.3, -0.6, 0.9, 0.05, -1.2]);
        fd(
            &|t, vals| {
                let a = t.param("a", vals[0].clone());
                let b = t.param("b", vals[1].clone());
                let p = t.matmul(a, b)?;
                let r = t.relu(p)?;
                t.reduce_sum(r)
            },
            &[a, b],
        );
    }

    #[test]
    fn fd_softmax_log_pipeline() {
        let x = mat(3, 4, &[0.3, -1.2, 0.8, 0.1, 2.0, -0.5, 0.0, 1.1, -0.7, 0.4, 0.9, -0.3]);
        fd(
            &|t, vals| {
                let x = t.param("x", vals[0].clone());
                let p = t.row_softmax(x)?;
                let lp = t.log(p)?;
                let s = t.row_sum(lp)?;
                t.reduce_sum(s)
            },
            &[x],
        );
    }

    #[test]
    fn fd_mixed_ops() {
        let a = mat(2, 3, &[0.4, -0.2, 0.9, 1.1, 0.3, -0.8]);
        let b = mat(2, 3, &[0.7, 0.2, -0.5, -0.1, 0.6, 0.4]);
        let v = mat(2, 1, &[1.5, 2.5]);
        fd(
            &|t, vals| {
                let a = t.param("a", vals[0].clone());
                let b = t.param("b", vals[1].clone());
                let v = t.param("v", vals[2].clone());
                let c = t.matmul_bt(a, b)?;
                let shifted = t.add_col(c, v)?;
                let clamped = t.clamp_max(shifted, 1.0)?;
                let e = t.exp(clamped)?;
                let joined = t.concat_cols(e, c)?;
                let divided = t.div_col(joined, v)?;
                let sig = t.sigmoid(divided)?;
                t.reduce_sum(sig)
            },
            &[a, b, v],
        );
    }

    #[test]
    fn fd_row_inner_and_sampled() {
        let a = mat(3, 2, &[0.3, 0.8, -0.4, 0.2, 1.0, -0.6]);
        let b = mat(3, 2, &[0.5, -0.1, 0.7, 0.9, -0.2, 0.3]);
        fd(
            &|t, vals| {
                let a = t.param("a", vals[0].clone());
                let b = t.param("b", vals[1].clone());
                let ri = t.row_inner_products(a, b)?;
                let si = t.sampled_inner(a, b, vec![1, 2, 0, 2, 1, 0], 2)?;
                let sr = t.row_sum(si)?;
                let total = t.add(ri, sr)?;
                let sq = t.mul(total, total)?;
                t.reduce_sum(sq)
            },
            &[a, b],
        );
    }

    #[test]
    fn fd_sqrt_scale_gather() {
        let x = mat(4, 2, &[0.9, 0.4, 1.7, 0.8, 0.6, 1.2, 2.0, 0.3]);
        fd(
            &|t, vals| {
                let x = t.param("x", vals[0].clone());
                let sq = t.mul(x, x)?;
                let sums = t.row_sum(sq)?;
                let eps = t.add_const(sums, 1e-8)?;
                let norms = t.sqrt(eps)?;
                let normed = t.div_col(x, norms)?;
                let picked = t.gather_rows(normed, vec![0, 2, 2])?;
                let scaled = t.scale(picked, 1.7)?;
                t.reduce_sum(scaled)
            },
            &[x],
        );
    }

    #[test]
    fn fd_bce_logits() {
        let x = mat(4, 1, &[0.3, -1.1, 2.2, 0.0]);
        fd(
            &|t, vals| {
                let x = t.param("x", vals[0].clone());
                t.bce_with_logits_mean(x, vec![1.0, 0.0, 1.0, 0.0])
            },
            &[x],
        );
    }

    #[test]
    fn fd_spmm() {
        let b = mat(3, 2, &[0.2, 0.5, -0.3, 0.9, 1.1, -0.2]);
        fd(
            &|t, vals| {
                let b = t.param("b", vals[0].clone());
                let s = SparseMatrix::from_triplets(3, 3, &[(0, 0, 0.5), (0, 2, 1.5), (1, 1, -0.7), (2, 0, 0.3)]).unwrap();
                let sid = t.add_sparse(s);
                let p = t.spmm(sid, b)?;
                let sq = t.mul(p, p)?;
                t.reduce_sum(sq)
            },
            &[b],
        );
    }
}
