//! Tensor-level reverse-mode automatic differentiation.
//!
//! A [`Graph`] records every operation of one forward pass as a node in
//! insertion order, which is already a topological order. [`Graph::backward`]
//! walks the nodes in reverse and accumulates vector-Jacobian products.
//!
//! Trainable parameters live in a [`ParamStore`]; the graph borrows them
//! instead of copying, and [`Graph::param_grads`] maps gradients back to
//! their [`ParamId`].
//!
//! ```
//! use dualvgr::autodiff::Graph;
//! use dualvgr::params::ParamStore;
//! use dualvgr::tensor::Tensor;
//!
//! let store = ParamStore::new();
//! let mut g = Graph::new(&store);
//! let x = g.input(Tensor::row_vector(&[1.0, 2.0]));
//! let y = g.mul(x, x);
//! let s = g.sum(y);
//! g.backward(s);
//! assert_eq!(g.grad(x).unwrap().data(), &[2.0, 4.0]);
//! ```

use std::collections::HashMap;

use crate::params::{ParamId, ParamStore};
use crate::tensor::{dot, sorted_sum, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddRow(NodeId, NodeId),
    MulCol(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    MatMulNT(NodeId, NodeId),
    Transpose(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Elu(NodeId),
    LeakyRelu(NodeId, f64),
    SoftmaxRows(NodeId),
    LogSoftmaxRows(NodeId),
    RowL2Normalize(NodeId, f64),
    PowerNormalize(NodeId, f64),
    ConcatCols(Vec<NodeId>),
    ConcatRows(Vec<NodeId>),
    SliceCols(NodeId, usize),
    SliceRows(NodeId, usize),
    GatherRows(NodeId, Vec<usize>),
    OuterSum(NodeId, NodeId),
    SumPoolCols(NodeId, usize),
    DoubleCenter(NodeId),
    Sum(NodeId),
    FrobeniusNorm(NodeId),
    Pick(NodeId, usize, usize),
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

struct Node {
    op: Op,
    value: Value,
}

/// One recorded forward pass.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    param_nodes: HashMap<ParamId, NodeId>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params, nodes: Vec::with_capacity(512), grads: Vec::new(), param_nodes: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value: Value::Owned(value) });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        match &self.nodes[id.0].value {
            Value::Owned(t) => t,
            Value::Param(p) => self.params.get(*p),
        }
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.value(id).shape()
    }

    /// A leaf holding a constant or an input. Gradients still flow into it.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    /// The node for parameter `id`; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        self.nodes.push(Node { op: Op::Param, value: Value::Param(id) });
        let n = NodeId(self.nodes.len() - 1);
        self.param_nodes.insert(id, n);
        n
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), v)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), v)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), v)
    }

    /// `a [n × c] + row [1 × c]` broadcast over rows.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (av, rv) = (self.value(a), self.value(row));
        assert_eq!(rv.rows(), 1, "add_row expects a 1 x c bias");
        assert_eq!(av.cols(), rv.cols(), "add_row width mismatch");
        let mut v = av.clone();
        for r in 0..v.rows() {
            for (x, b) in v.row_mut(r).iter_mut().zip(rv.data()) {
                *x += b;
            }
        }
        self.push(Op::AddRow(a, row), v)
    }

    /// `a [n × c]` with row `i` scaled by `col[i]` (`col` is `n × 1`).
    pub fn mul_col(&mut self, a: NodeId, col: NodeId) -> NodeId {
        let (av, cv) = (self.value(a), self.value(col));
        assert_eq!(cv.shape(), (av.rows(), 1), "mul_col expects an n x 1 column");
        let mut v = av.clone();
        for r in 0..v.rows() {
            let s = cv.data()[r];
            for x in v.row_mut(r) {
                *x *= s;
            }
        }
        self.push(Op::MulCol(a, col), v)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    /// [`Graph::matmul`] whose forward sums are independent of the order of
    /// the contraction axis; used to pool over clips.
    pub fn matmul_order_invariant(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_order_invariant(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    /// `a · bᵀ`; with `b` a `[out × in]` weight this is a linear map of the rows of `a`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_nt(self.value(b));
        self.push(Op::MatMulNT(a, b), v)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    /// ELU with α = 1.
    pub fn elu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { x.exp_m1() });
        self.push(Op::Elu(a), v)
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(Op::LeakyRelu(a, slope), v)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let v = softmax_rows(self.value(a));
        self.push(Op::SoftmaxRows(a), v)
    }

    pub fn log_softmax_rows(&mut self, a: NodeId) -> NodeId {
        let av = self.value(a);
        let mut v = av.clone();
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        self.push(Op::LogSoftmaxRows(a), v)
    }

    /// Each row divided by `max(‖row‖₂, eps)`.
    pub fn row_l2_normalize(&mut self, a: NodeId, eps: f64) -> NodeId {
        let mut v = self.value(a).clone();
        for r in 0..v.rows() {
            let row = v.row_mut(r);
            let norm = dot(row, row).sqrt().max(eps);
            for x in row.iter_mut() {
                *x /= norm;
            }
        }
        self.push(Op::RowL2Normalize(a, eps), v)
    }

    /// `sign(x)·√(|x| + eps)` elementwise.
    pub fn power_normalize(&mut self, a: NodeId, eps: f64) -> NodeId {
        let v = self.value(a).map(|x| signum0(x) * (x.abs() + eps).sqrt());
        self.push(Op::PowerNormalize(a, eps), v)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut v = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                v.row_mut(r)[offset..offset + pv.cols()].copy_from_slice(pv.row(r));
            }
            offset += pv.cols();
        }
        self.push(Op::ConcatCols(parts.to_vec()), v)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(pv.data());
            rows += pv.rows();
        }
        self.push(Op::ConcatRows(parts.to_vec()), Tensor::from_vec(rows, cols, data))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(a).slice_cols(start, len);
        self.push(Op::SliceCols(a, start), v)
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(a).slice_rows(start, len);
        self.push(Op::SliceRows(a, start), v)
    }

    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> NodeId {
        let v = self.value(a).gather_rows(indices);
        self.push(Op::GatherRows(a, indices.to_vec()), v)
    }

    /// `out[i][j] = a[i] + b[j]` for column vectors `a [n × 1]`, `b [m × 1]`.
    pub fn outer_sum(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.cols(), 1);
        assert_eq!(bv.cols(), 1);
        let mut v = Tensor::zeros(av.rows(), bv.rows());
        for i in 0..av.rows() {
            for j in 0..bv.rows() {
                v.set(i, j, av.data()[i] + bv.data()[j]);
            }
        }
        self.push(Op::OuterSum(a, b), v)
    }

    /// Sums each consecutive block of `k` columns: `[n × k·c] → [n × c]`.
    pub fn sum_pool_cols(&mut self, a: NodeId, k: usize) -> NodeId {
        let av = self.value(a);
        assert!(k > 0 && av.cols().is_multiple_of(k), "sum_pool_cols: width {} not divisible by {k}", av.cols());
        let c = av.cols() / k;
        let mut v = Tensor::zeros(av.rows(), c);
        for r in 0..av.rows() {
            let src = av.row(r);
            for (j, out) in v.row_mut(r).iter_mut().enumerate() {
                *out = src[j * k..(j + 1) * k].iter().sum();
            }
        }
        self.push(Op::SumPoolCols(a, k), v)
    }

    /// `R·A·R` with the centering matrix `R = I − (1/n)·e·eᵀ`.
    pub fn double_center(&mut self, a: NodeId) -> NodeId {
        let v = double_center(self.value(a));
        self.push(Op::DoubleCenter(a), v)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a), v)
    }

    pub fn frobenius_norm(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).frobenius_norm());
        self.push(Op::FrobeniusNorm(a), v)
    }

    /// The scalar at `(r, c)`.
    pub fn pick(&mut self, a: NodeId, r: usize, c: usize) -> NodeId {
        let v = Tensor::scalar(self.value(a).get(r, c));
        self.push(Op::Pick(a, r, c), v)
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradients of every parameter reached by the last [`Graph::backward`].
    pub fn param_grads(&self) -> impl Iterator<Item = (ParamId, &Tensor)> + '_ {
        self.param_nodes.iter().filter_map(move |(&p, &n)| self.grad(n).map(|g| (p, g)))
    }

    /// Reverse sweep from a `1 × 1` root.
    pub fn backward(&mut self, root: NodeId) {
        assert_eq!(self.value(root).shape(), (1, 1), "backward root must be a scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(NodeId(i), &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
    }

    fn propagate(&self, id: NodeId, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = self.value(id);
        match &self.nodes[id.0].op {
            Op::Leaf | Op::Param => {}
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, g.zip_map(bv, |x, y| x * y));
                accumulate(grads, *b, g.zip_map(av, |x, y| x * y));
            }
            Op::Scale(a, s) => accumulate(grads, *a, g.map(|x| x * s)),
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.clone());
                let mut gr = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (acc, x) in gr.data_mut().iter_mut().zip(g.row(r)) {
                        *acc += x;
                    }
                }
                accumulate(grads, *row, gr);
            }
            Op::MulCol(a, col) => {
                let (av, cv) = (self.value(*a), self.value(*col));
                let mut ga = g.clone();
                let mut gc = Tensor::zeros(cv.rows(), 1);
                for r in 0..g.rows() {
                    let s = cv.data()[r];
                    gc.data_mut()[r] = dot(g.row(r), av.row(r));
                    for x in ga.row_mut(r) {
                        *x *= s;
                    }
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *col, gc);
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, g.matmul_nt(bv));
                accumulate(grads, *b, av.matmul_tn(g));
            }
            Op::MatMulNT(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, g.matmul(bv));
                accumulate(grads, *b, g.matmul_tn(av));
            }
            Op::Transpose(a) => accumulate(grads, *a, g.transpose()),
            Op::Sigmoid(a) => accumulate(grads, *a, g.zip_map(out, |gx, y| gx * y * (1.0 - y))),
            Op::Tanh(a) => accumulate(grads, *a, g.zip_map(out, |gx, y| gx * (1.0 - y * y))),
            Op::Elu(a) => {
                let ga = g.zip_map(out, |gx, y| if y > 0.0 { gx } else { gx * (y + 1.0) });
                accumulate(grads, *a, ga);
            }
            Op::LeakyRelu(a, slope) => {
                let ga = g.zip_map(self.value(*a), |gx, x| if x > 0.0 { gx } else { gx * slope });
                accumulate(grads, *a, ga);
            }
            Op::SoftmaxRows(a) => {
                let mut ga = g.clone();
                for r in 0..g.rows() {
                    let y = out.row(r);
                    let s = dot(g.row(r), y);
                    for (x, &yi) in ga.row_mut(r).iter_mut().zip(y) {
                        *x = yi * (*x - s);
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::LogSoftmaxRows(a) => {
                let mut ga = g.clone();
                for r in 0..g.rows() {
                    let s: f64 = g.row(r).iter().sum();
                    for (x, &ly) in ga.row_mut(r).iter_mut().zip(out.row(r)) {
                        *x -= ly.exp() * s;
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::RowL2Normalize(a, eps) => {
                let av = self.value(*a);
                let mut ga = g.clone();
                for r in 0..g.rows() {
                    let norm = dot(av.row(r), av.row(r)).sqrt();
                    if norm > *eps {
                        let y = out.row(r);
                        let s = dot(y, g.row(r));
                        for (x, &yi) in ga.row_mut(r).iter_mut().zip(y) {
                            *x = (*x - yi * s) / norm;
                        }
                    } else {
                        for x in ga.row_mut(r) {
                            *x /= eps;
                        }
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::PowerNormalize(a, eps) => {
                let ga = g.zip_map(self.value(*a), |gx, x| gx * 0.5 / (x.abs() + eps).sqrt());
                accumulate(grads, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    accumulate(grads, p, g.slice_cols(offset, w));
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let h = self.value(p).rows();
                    accumulate(grads, p, g.slice_rows(offset, h));
                    offset += h;
                }
            }
            Op::SliceCols(a, start) => {
                let mut ga = Tensor::zeros(self.value(*a).rows(), self.value(*a).cols());
                for r in 0..g.rows() {
                    ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                accumulate(grads, *a, ga);
            }
            Op::SliceRows(a, start) => {
                let (rows, cols) = self.value(*a).shape();
                let mut ga = Tensor::zeros(rows, cols);
                ga.data_mut()[start * cols..(start + g.rows()) * cols].copy_from_slice(g.data());
                accumulate(grads, *a, ga);
            }
            Op::GatherRows(a, indices) => {
                let (rows, cols) = self.value(*a).shape();
                let mut ga = Tensor::zeros(rows, cols);
                for (k, &i) in indices.iter().enumerate() {
                    for (x, y) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                        *x += y;
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::OuterSum(a, b) => {
                let mut ga = Tensor::zeros(g.rows(), 1);
                let mut gb = Tensor::zeros(g.cols(), 1);
                for i in 0..g.rows() {
                    for j in 0..g.cols() {
                        let x = g.get(i, j);
                        ga.data_mut()[i] += x;
                        gb.data_mut()[j] += x;
                    }
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::SumPoolCols(a, k) => {
                let (rows, cols) = self.value(*a).shape();
                let mut ga = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    let gr = g.row(r);
                    for (c, x) in ga.row_mut(r).iter_mut().enumerate() {
                        *x = gr[c / k];
                    }
                }
                accumulate(grads, *a, ga);
            }
            Op::DoubleCenter(a) => accumulate(grads, *a, double_center(g)),
            Op::Sum(a) => {
                let (rows, cols) = self.value(*a).shape();
                accumulate(grads, *a, Tensor::filled(rows, cols, g.item()));
            }
            Op::FrobeniusNorm(a) => {
                let norm = out.item();
                let av = self.value(*a);
                let ga = if norm > 0.0 { av.map(|x| g.item() * x / norm) } else { Tensor::zeros(av.rows(), av.cols()) };
                accumulate(grads, *a, ga);
            }
            Op::Pick(a, r, c) => {
                let (rows, cols) = self.value(*a).shape();
                let mut ga = Tensor::zeros(rows, cols);
                ga.set(*r, *c, g.item());
                accumulate(grads, *a, ga);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn softmax_rows(a: &Tensor) -> Tensor {
    let mut v = a.clone();
    for r in 0..v.rows() {
        let row = v.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for x in row.iter_mut() {
            *x = (*x - max).exp();
        }
        let total = sorted_sum(&mut row.to_vec());
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    v
}

pub fn double_center(a: &Tensor) -> Tensor {
    let (n, m) = a.shape();
    assert_eq!(n, m, "double_center expects a square matrix");
    let nf = n as f64;
    let row_means: Vec<f64> = (0..n).map(|r| a.row(r).iter().sum::<f64>() / nf).collect();
    let col_means: Vec<f64> = (0..n).map(|c| (0..n).map(|r| a.get(r, c)).sum::<f64>() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    let mut out = a.clone();
    for r in 0..n {
        for c in 0..n {
            out.set(r, c, a.get(r, c) - row_means[r] - col_means[c] + grand);
        }
    }
    out
}
