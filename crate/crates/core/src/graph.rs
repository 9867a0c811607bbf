//! Eager reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Graph`] is a tape: every primitive evaluates immediately and appends a
//! node holding its value, so node creation order is already a topological
//! order. [`Graph::backward`] walks the tape once in reverse.
//!
//! Set-structured data is handled by stacking many sets vertically and
//! describing the row blocks with [`Segments`]; pooling, broadcasting and
//! sorting then act per block.

use crate::error::{shape_err, DctError, Result};
use crate::tensor::{gemm, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Index of a trainable tensor inside a [`crate::nn::ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Row partition of a stacked matrix into consecutive blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segments {
    lengths: Vec<usize>,
    offsets: Vec<usize>,
}

impl Segments {
    pub fn new(lengths: Vec<usize>) -> Result<Self> {
        if lengths.contains(&0) {
            return Err(DctError::EmptySet);
        }
        let mut offsets = Vec::with_capacity(lengths.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &l in &lengths {
            acc += l;
            offsets.push(acc);
        }
        Ok(Self { lengths, offsets })
    }

    /// `count` blocks of `len` rows each.
    pub fn uniform(count: usize, len: usize) -> Result<Self> {
        Self::new(vec![len; count])
    }

    pub fn count(&self) -> usize {
        self.lengths.len()
    }

    pub fn total_rows(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn range(&self, s: usize) -> std::ops::Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }
}

pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;

#[inline]
pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
    }
}

#[inline]
fn selu_grad_from_output(y: f64) -> f64 {
    if y > 0.0 {
        SELU_LAMBDA
    } else {
        y + SELU_LAMBDA * SELU_ALPHA
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh form of GELU.
#[inline]
pub fn gelu(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

#[inline]
fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let th = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Linear { x: NodeId, w: NodeId, b: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Square(NodeId),
    Sqrt(NodeId),
    Selu(NodeId),
    Gelu(NodeId),
    ConcatCols(Vec<NodeId>),
    SegmentMean(NodeId, Segments),
    SegmentBroadcast(NodeId, Segments),
    SortSegments { x: NodeId, perm: Vec<usize> },
    SliceRows { x: NodeId, start: usize },
    GatherRows { x: NodeId, index: Vec<usize> },
    Sum(NodeId),
    Mean(NodeId),
    PairwiseDist(NodeId, NodeId),
    NormalizeRows(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    params: Vec<Option<Tensor>>,
    variables: Vec<(NodeId, Tensor)>,
}

impl Gradients {
    /// Gradient of a parameter, `None` if it did not influence the output.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a leaf created with [`Graph::variable`].
    pub fn variable(&self, id: NodeId) -> Option<&Tensor> {
        self.variables
            .iter()
            .find(|(n, _)| *n == id)
            .map(|(_, g)| g)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }
}

/// The tape.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn check2(op: &'static str, t: &Tensor) -> Result<()> {
    if t.shape().len() != 2 {
        return Err(shape_err(op, format!("expected a matrix, got {:?}", t.shape())));
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(DctError::NonFinite(name));
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            other => inputs(other).iter().any(|i| self.nodes[i.0].requires_grad),
        };
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            param: None,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, t: Tensor) -> Result<NodeId> {
        check2("input", &t)?;
        self.push(Op::Leaf, t, "input")
    }

    /// Leaf whose gradient is reported by [`Gradients::variable`].
    pub fn variable(&mut self, t: Tensor) -> Result<NodeId> {
        let id = self.input(t)?;
        self.nodes[id.0].requires_grad = true;
        Ok(id)
    }

    /// Binds a trainable tensor.
    pub fn param(&mut self, id: ParamId, t: &Tensor) -> Result<NodeId> {
        let node = self.variable(t.clone())?;
        self.nodes[node.0].param = Some(id);
        Ok(node)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(shape_err("matmul", format!("{:?} x {:?}", va.shape(), vb.shape())));
        }
        let out = va.matmul(vb)?;
        self.push(Op::MatMul(a, b), out, "matmul")
    }

    /// `x · w + b` with `b` a `[1, out]` row broadcast over rows.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (vx, vw, vb) = (self.value(x), self.value(w), self.value(b));
        if vx.cols() != vw.rows() || vb.rows() != 1 || vb.cols() != vw.cols() {
            return Err(shape_err(
                "linear",
                format!("x {:?}, w {:?}, b {:?}", vx.shape(), vw.shape(), vb.shape()),
            ));
        }
        let (n, m) = (vx.rows(), vw.cols());
        let mut out = Vec::with_capacity(n * m);
        for _ in 0..n {
            out.extend_from_slice(vb.data());
        }
        gemm(vx.data(), n, vx.cols(), false, vw.data(), vw.rows(), m, false, 1.0, &mut out);
        let t = Tensor::matrix(n, m, out)?;
        self.push(Op::Linear { x, w, b }, t, "linear")
    }

    fn zip(&mut self, a: NodeId, b: NodeId, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.same_shape(vb) {
            return Err(shape_err(name, format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let t = self.zip(a, b, "add", |x, y| x + y)?;
        self.push(Op::Add(a, b), t, "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let t = self.zip(a, b, "sub", |x, y| x - y)?;
        self.push(Op::Sub(a, b), t, "sub")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let t = self.zip(a, b, "mul", |x, y| x * y)?;
        self.push(Op::Mul(a, b), t, "mul")
    }

    /// Adds a `[1, cols]` row to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(shape_err("add_row", format!("{:?} + {:?}", va.shape(), vr.shape())));
        }
        let c = va.cols();
        let data = va
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + vr.data()[i % c])
            .collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        self.push(Op::AddRow(a, row), t, "add_row")
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        let t = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), t, "scale")
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.value(a).map(|x| x * x);
        self.push(Op::Square(a), t, "square")
    }

    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        if self.value(a).data().iter().any(|&x| x < 0.0) {
            return Err(DctError::NonFinite("sqrt"));
        }
        let t = self.value(a).map(f64::sqrt);
        self.push(Op::Sqrt(a), t, "sqrt")
    }

    pub fn selu(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.value(a).map(selu);
        self.push(Op::Selu(a), t, "selu")
    }

    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        let t = self.value(a).map(gelu);
        self.push(Op::Gelu(a), t, "gelu")
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(shape_err("concat_cols", "no operands"));
        }
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|p| self.value(*p).rows() != rows) {
            return Err(shape_err("concat_cols", "row counts differ"));
        }
        let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let t = Tensor::matrix(rows, total, data)?;
        self.push(Op::ConcatCols(parts.to_vec()), t, "concat_cols")
    }

    /// Arithmetic mean of each row block; output has one row per segment.
    ///
    /// Rows are summed left to right in storage order.
    pub fn segment_mean(&mut self, a: NodeId, seg: &Segments) -> Result<NodeId> {
        let va = self.value(a);
        if seg.total_rows() != va.rows() {
            return Err(shape_err(
                "segment_mean",
                format!("{} rows vs segments covering {}", va.rows(), seg.total_rows()),
            ));
        }
        let c = va.cols();
        let mut out = vec![0.0; seg.count() * c];
        for s in 0..seg.count() {
            let acc = &mut out[s * c..(s + 1) * c];
            for r in seg.range(s) {
                for (o, v) in acc.iter_mut().zip(va.row(r)) {
                    *o += v;
                }
            }
            let inv = 1.0 / seg.lengths()[s] as f64;
            acc.iter_mut().for_each(|o| *o *= inv);
        }
        let t = Tensor::matrix(seg.count(), c, out)?;
        self.push(Op::SegmentMean(a, seg.clone()), t, "segment_mean")
    }

    /// Repeats row `s` of `a` over every row of segment `s`.
    pub fn segment_broadcast(&mut self, a: NodeId, seg: &Segments) -> Result<NodeId> {
        let va = self.value(a);
        if va.rows() != seg.count() {
            return Err(shape_err(
                "segment_broadcast",
                format!("{} rows vs {} segments", va.rows(), seg.count()),
            ));
        }
        let c = va.cols();
        let mut data = Vec::with_capacity(seg.total_rows() * c);
        for s in 0..seg.count() {
            for _ in seg.range(s) {
                data.extend_from_slice(va.row(s));
            }
        }
        let t = Tensor::matrix(seg.total_rows(), c, data)?;
        self.push(Op::SegmentBroadcast(a, seg.clone()), t, "segment_broadcast")
    }

    /// Sorts every column ascending within each row block.
    ///
    /// Ties keep their original order, so the permutation used by the
    /// backward pass is unique.
    pub fn sort_segments(&mut self, a: NodeId, seg: &Segments) -> Result<NodeId> {
        let va = self.value(a);
        if seg.total_rows() != va.rows() {
            return Err(shape_err("sort_segments", "segments do not cover the rows"));
        }
        let c = va.cols();
        let mut out = vec![0.0; va.len()];
        let mut perm = vec![0usize; va.len()];
        let mut idx: Vec<usize> = Vec::new();
        for s in 0..seg.count() {
            let range = seg.range(s);
            for col in 0..c {
                idx.clear();
                idx.extend(range.clone());
                idx.sort_by(|&i, &j| va.data()[i * c + col].total_cmp(&va.data()[j * c + col]));
                for (k, &src) in idx.iter().enumerate() {
                    let dst = (range.start + k) * c + col;
                    out[dst] = va.data()[src * c + col];
                    perm[dst] = src * c + col;
                }
            }
        }
        let t = Tensor::new(va.shape().to_vec(), out)?;
        self.push(Op::SortSegments { x: a, perm }, t, "sort_segments")
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let t = self.value(a).slice_rows(start, end)?;
        self.push(Op::SliceRows { x: a, start }, t, "slice_rows")
    }

    /// Row lookup, used for embedding tables.
    pub fn gather_rows(&mut self, a: NodeId, index: &[usize]) -> Result<NodeId> {
        let va = self.value(a);
        let c = va.cols();
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index {
            if i >= va.rows() {
                return Err(DctError::IndexOutOfRange {
                    index: i,
                    len: va.rows(),
                });
            }
            data.extend_from_slice(va.row(i));
        }
        let t = Tensor::matrix(index.len(), c, data)?;
        self.push(
            Op::GatherRows {
                x: a,
                index: index.to_vec(),
            },
            t,
            "gather_rows",
        )
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s), "sum")
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        if va.is_empty() {
            return Err(DctError::EmptySet);
        }
        let s: f64 = va.data().iter().sum::<f64>() / va.len() as f64;
        self.push(Op::Mean(a), Tensor::scalar(s), "mean")
    }

    /// Euclidean distance matrix `D[i, j] = ‖a_i − b_j‖`.
    pub fn pairwise_dist(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() {
            return Err(shape_err("pairwise_dist", "dimension mismatch"));
        }
        let (n, m) = (va.rows(), vb.rows());
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let ai = va.row(i);
            for j in 0..m {
                out.push(euclid(ai, vb.row(j)));
            }
        }
        let t = Tensor::matrix(n, m, out)?;
        self.push(Op::PairwiseDist(a, b), t, "pairwise_dist")
    }

    /// Scales every row to unit Euclidean norm.
    pub fn normalize_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        let mut t = va.clone();
        for r in 0..t.rows() {
            let row = t.row_mut(r);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(DctError::NonFinite("normalize_rows"));
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        self.push(Op::NormalizeRows(a), t, "normalize_rows")
    }

    /// Reverse pass from `output` seeded with `seed` (same shape as the output).
    pub fn backward(&self, output: NodeId, seed: &Tensor) -> Result<Gradients> {
        if output.0 >= self.nodes.len() {
            return Err(DctError::NotForwarded);
        }
        if !seed.same_shape(&self.nodes[output.0].value) {
            return Err(shape_err(
                "backward",
                format!(
                    "seed {:?} vs output {:?}",
                    seed.shape(),
                    self.nodes[output.0].value.shape()
                ),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(seed.clone());
        let mut result = Gradients::default();

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    if let Some(pid) = node.param {
                        if result.params.len() <= pid.0 {
                            result.params.resize(pid.0 + 1, None);
                        }
                        accumulate_into(&mut result.params[pid.0], g)?;
                    } else {
                        result.variables.push((NodeId(i), g));
                    }
                }
                op => self.propagate(op, &node.value, g, &mut grads)?,
            }
        }
        Ok(result)
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let mut da = vec![0.0; va.len()];
                    gemm(g.data(), g.rows(), g.cols(), false, vb.data(), vb.rows(), vb.cols(), true, 0.0, &mut da);
                    acc(grads, *a, Tensor::new(va.shape().to_vec(), da)?)?;
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; vb.len()];
                    gemm(va.data(), va.rows(), va.cols(), true, g.data(), g.rows(), g.cols(), false, 0.0, &mut db);
                    acc(grads, *b, Tensor::new(vb.shape().to_vec(), db)?)?;
                }
            }
            Op::Linear { x, w, b } => {
                let (vx, vw) = (self.value(*x), self.value(*w));
                if self.wants(*x) {
                    let mut dx = vec![0.0; vx.len()];
                    gemm(g.data(), g.rows(), g.cols(), false, vw.data(), vw.rows(), vw.cols(), true, 0.0, &mut dx);
                    acc(grads, *x, Tensor::new(vx.shape().to_vec(), dx)?)?;
                }
                if self.wants(*w) {
                    let mut dw = vec![0.0; vw.len()];
                    gemm(vx.data(), vx.rows(), vx.cols(), true, g.data(), g.rows(), g.cols(), false, 0.0, &mut dw);
                    acc(grads, *w, Tensor::new(vw.shape().to_vec(), dw)?)?;
                }
                if self.wants(*b) {
                    acc(grads, *b, column_sums(&g))?;
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    acc(grads, *a, g.clone())?;
                }
                if self.wants(*b) {
                    acc(grads, *b, g)?;
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*b) {
                    acc(grads, *b, g.map(|v| -v))?;
                }
                if self.wants(*a) {
                    acc(grads, *a, g)?;
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    acc(grads, *a, hadamard(&g, vb)?)?;
                }
                if self.wants(*b) {
                    acc(grads, *b, hadamard(&g, va)?)?;
                }
            }
            Op::AddRow(a, row) => {
                if self.wants(*row) {
                    acc(grads, *row, column_sums(&g))?;
                }
                if self.wants(*a) {
                    acc(grads, *a, g)?;
                }
            }
            Op::Scale(a, s) => {
                let s = *s;
                acc(grads, *a, g.map(|v| v * s))?;
            }
            Op::Square(a) => {
                let va = self.value(*a);
                acc(grads, *a, zip_with(&g, va, |gv, x| 2.0 * x * gv)?)?;
            }
            Op::Sqrt(a) => {
                acc(grads, *a, zip_with(&g, out, |gv, y| if y > 0.0 { gv / (2.0 * y) } else { 0.0 })?)?;
            }
            Op::Selu(a) => {
                // For x ≤ 0, λα·eˣ = selu(x) + λα, so the slope comes from the output.
                acc(grads, *a, zip_with(&g, out, |gv, y| gv * selu_grad_from_output(y))?)?;
            }
            Op::Gelu(a) => {
                let va = self.value(*a);
                acc(grads, *a, zip_with(&g, va, |gv, x| gv * gelu_grad(x))?)?;
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for p in parts {
                    let c = self.value(*p).cols();
                    if self.wants(*p) {
                        let mut d = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            d.extend_from_slice(&g.row(r)[offset..offset + c]);
                        }
                        acc(grads, *p, Tensor::matrix(rows, c, d)?)?;
                    }
                    offset += c;
                }
            }
            Op::SegmentMean(a, seg) => {
                let c = g.cols();
                let mut d = Tensor::zeros(seg.total_rows(), c);
                for s in 0..seg.count() {
                    let inv = 1.0 / seg.lengths()[s] as f64;
                    for r in seg.range(s) {
                        for (o, v) in d.row_mut(r).iter_mut().zip(g.row(s)) {
                            *o = v * inv;
                        }
                    }
                }
                acc(grads, *a, d)?;
            }
            Op::SegmentBroadcast(a, seg) => {
                let c = g.cols();
                let mut d = Tensor::zeros(seg.count(), c);
                for s in 0..seg.count() {
                    for r in seg.range(s) {
                        for (o, v) in d.row_mut(s).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                acc(grads, *a, d)?;
            }
            Op::SortSegments { x, perm } => {
                let mut d = vec![0.0; g.len()];
                for (k, &src) in perm.iter().enumerate() {
                    d[src] += g.data()[k];
                }
                acc(grads, *x, Tensor::new(g.shape().to_vec(), d)?)?;
            }
            Op::SliceRows { x, start } => {
                let vx = self.value(*x);
                let mut d = Tensor::zeros(vx.rows(), vx.cols());
                let c = vx.cols();
                d.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                acc(grads, *x, d)?;
            }
            Op::GatherRows { x, index } => {
                let vx = self.value(*x);
                let mut d = Tensor::zeros(vx.rows(), vx.cols());
                for (k, &i) in index.iter().enumerate() {
                    for (o, v) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                acc(grads, *x, d)?;
            }
            Op::Sum(a) => {
                let va = self.value(*a);
                acc(grads, *a, Tensor::new(va.shape().to_vec(), vec![g.item(); va.len()])?)?;
            }
            Op::Mean(a) => {
                let va = self.value(*a);
                let v = g.item() / va.len() as f64;
                acc(grads, *a, Tensor::new(va.shape().to_vec(), vec![v; va.len()])?)?;
            }
            Op::PairwiseDist(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let d = va.cols();
                let mut da = Tensor::zeros(va.rows(), d);
                let mut db = Tensor::zeros(vb.rows(), d);
                for i in 0..va.rows() {
                    for j in 0..vb.rows() {
                        let dist = out.get(i, j);
                        let gij = g.get(i, j);
                        if dist <= 0.0 || gij == 0.0 {
                            continue;
                        }
                        let w = gij / dist;
                        for k in 0..d {
                            let diff = w * (va.get(i, k) - vb.get(j, k));
                            da.data_mut()[i * d + k] += diff;
                            db.data_mut()[j * d + k] -= diff;
                        }
                    }
                }
                if self.wants(*a) {
                    acc(grads, *a, da)?;
                }
                if self.wants(*b) {
                    acc(grads, *b, db)?;
                }
            }
            Op::NormalizeRows(a) => {
                let va = self.value(*a);
                let mut d = Tensor::zeros(va.rows(), va.cols());
                for r in 0..va.rows() {
                    let norm = va.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                    let y = out.row(r);
                    let gy: f64 = y.iter().zip(g.row(r)).map(|(a, b)| a * b).sum();
                    for (k, o) in d.row_mut(r).iter_mut().enumerate() {
                        *o = (g.get(r, k) - y[k] * gy) / norm;
                    }
                }
                acc(grads, *a, d)?;
            }
        }
        Ok(())
    }
}

fn inputs(op: &Op) -> Vec<NodeId> {
    match op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) => {
            vec![*a, *b]
        }
        Op::PairwiseDist(a, b) => vec![*a, *b],
        Op::Linear { x, w, b } => vec![*x, *w, *b],
        Op::Scale(a, _)
        | Op::Square(a)
        | Op::Sqrt(a)
        | Op::Selu(a)
        | Op::Gelu(a)
        | Op::SegmentMean(a, _)
        | Op::SegmentBroadcast(a, _)
        | Op::Sum(a)
        | Op::Mean(a)
        | Op::NormalizeRows(a) => vec![*a],
        Op::SortSegments { x, .. } | Op::SliceRows { x, .. } | Op::GatherRows { x, .. } => vec![*x],
        Op::ConcatCols(parts) => parts.clone(),
    }
}

#[inline]
pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn accumulate_into(slot: &mut Option<Tensor>, g: Tensor) -> Result<()> {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn acc(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) -> Result<()> {
    accumulate_into(&mut grads[id.0], g)
}

fn column_sums(g: &Tensor) -> Tensor {
    let c = g.cols();
    let mut out = vec![0.0; c];
    for r in 0..g.rows() {
        for (o, v) in out.iter_mut().zip(g.row(r)) {
            *o += v;
        }
    }
    Tensor::row_vector(&out)
}

fn hadamard(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with(a, b, |x, y| x * y)
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data)
}
