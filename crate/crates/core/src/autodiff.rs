//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Every operation appends a node to the [`Tape`] holding its forward value,
//! so nodes are stored in topological order by construction and the backward
//! sweep is a single reverse pass. Nodes built only from constants are marked
//! as not requiring gradients and are skipped during the sweep.
//!
//! Any operation whose output contains NaN or ±Inf fails with
//! [`Error::NonFinite`] naming the node, rather than letting the value
//! propagate.

use crate::error::{Error, Result};
use crate::tensor::{gemm_nt, gemm_tn, matrix_dims, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
    Scalar,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(usize, usize),
    Add(usize, usize, Broadcast),
    Sub(usize, usize, Broadcast),
    Mul(usize, usize, Broadcast),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Softplus(usize),
    Sigmoid(usize),
    Square(usize),
    Clamp(usize, f64, f64),
    Sum(usize),
    Mean(usize),
    SumCols(usize),
    LogSoftmax(usize),
    SliceCols(usize, usize),
    Slice(usize, usize),
    Reshape(usize),
    RepeatRows(usize, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Relu(..) => "relu",
            Op::Tanh(..) => "tanh",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Softplus(..) => "softplus",
            Op::Sigmoid(..) => "sigmoid",
            Op::Square(..) => "square",
            Op::Clamp(..) => "clamp",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumCols(..) => "sum_cols",
            Op::LogSoftmax(..) => "log_softmax",
            Op::SliceCols(..) => "slice_cols",
            Op::Slice(..) => "slice",
            Op::Reshape(..) => "reshape",
            Op::RepeatRows(..) => "repeat_rows",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], keyed by leaf node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when the loss does not depend on it.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn broadcast_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        Ok(Broadcast::Same)
    } else if b.numel() == 1 {
        Ok(Broadcast::Scalar)
    } else if b.numel() == a.cols() && b.rows() == 1 {
        Ok(Broadcast::Row)
    } else {
        Err(Error::shape(op, a.shape(), b.shape()))
    }
}

fn broadcast_apply(a: &Tensor, b: &Tensor, kind: Broadcast, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let bd = b.data();
    let cols = a.cols();
    let data: Vec<f64> = match kind {
        Broadcast::Same => a.data().iter().zip(bd).map(|(&x, &y)| f(x, y)).collect(),
        Broadcast::Scalar => a.data().iter().map(|&x| f(x, bd[0])).collect(),
        Broadcast::Row => a
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bd[i % cols]))
            .collect(),
    };
    Tensor::new(a.shape().to_vec(), data).expect("broadcast preserves shape")
}

/// Reduces an upstream gradient with `a`'s shape onto the broadcast operand.
fn reduce_broadcast(g: &[f64], kind: Broadcast, cols: usize, out: &mut [f64]) {
    match kind {
        Broadcast::Same => {
            for (o, &v) in out.iter_mut().zip(g) {
                *o += v;
            }
        }
        Broadcast::Scalar => out[0] += g.iter().sum::<f64>(),
        Broadcast::Row => {
            for (i, &v) in g.iter().enumerate() {
                out[i % cols] += v;
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Constant,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Copies the value of `v` into a fresh constant, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> Result<f64> {
        self.value(v).item()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Result<Var> {
        let id = self.nodes.len();
        if !value.is_finite() {
            return Err(Error::NonFinite {
                op: op.name(),
                node: id,
            });
        }
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(id))
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let value = self.value(x).map(f);
        self.push(value, op, &[x.0])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push(value, Op::MatMul(a.0, b.0), &[a.0, b.0])
    }

    /// `a + b`, with `b` broadcast over rows of `a` when it is a row vector or scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = broadcast_kind("add", self.value(a), self.value(b))?;
        let value = broadcast_apply(self.value(a), self.value(b), kind, |x, y| x + y);
        self.push(value, Op::Add(a.0, b.0, kind), &[a.0, b.0])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = broadcast_kind("sub", self.value(a), self.value(b))?;
        let value = broadcast_apply(self.value(a), self.value(b), kind, |x, y| x - y);
        self.push(value, Op::Sub(a.0, b.0, kind), &[a.0, b.0])
    }

    /// Elementwise product with the same broadcasting rules as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let kind = broadcast_kind("mul", self.value(a), self.value(b))?;
        let value = broadcast_apply(self.value(a), self.value(b), kind, |x, y| x * y);
        self.push(value, Op::Mul(a.0, b.0, kind), &[a.0, b.0])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.unary(x, Op::Scale(x.0, c), |v| v * c)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.scale(x, -1.0)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        self.unary(x, Op::AddScalar(x.0), |v| v + c)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Relu(x.0), |v| v.max(0.0))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Tanh(x.0), f64::tanh)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Exp(x.0), f64::exp)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Log(x.0), f64::ln)
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Softplus(x.0), softplus)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Sigmoid(x.0), sigmoid)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Square(x.0), |v| v * v)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary(x, Op::Clamp(x.0, lo, hi), |v| v.clamp(lo, hi))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x.0), &[x.0])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(x).mean());
        self.push(value, Op::Mean(x.0), &[x.0])
    }

    /// Sums over the trailing axis: `[n, m] → [n]`.
    pub fn sum_cols(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let rows = t.rows();
        let data = (0..rows).map(|i| t.row(i).iter().sum()).collect();
        let value = Tensor::new(vec![rows], data)?;
        self.push(value, Op::SumCols(x.0), &[x.0])
    }

    /// Row-wise log-softmax over the trailing axis.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let mut out = t.clone();
        for i in 0..t.rows() {
            let row = out.row_mut(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        self.push(out, Op::LogSoftmax(x.0), &[x.0])
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        if start > end || end > t.cols() || t.shape().len() != 2 {
            return Err(Error::shape("slice_cols", t.shape(), &[start, end]));
        }
        let value = t.slice_cols(start, end);
        self.push(value, Op::SliceCols(x.0, start), &[x.0])
    }

    /// Flat elements `start..start+len` as a vector.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        if start + len > t.numel() {
            return Err(Error::shape("slice", t.shape(), &[start, len]));
        }
        let value = Tensor::vector(t.data()[start..start + len].to_vec());
        self.push(value, Op::Slice(x.0, start), &[x.0])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        self.push(value, Op::Reshape(x.0), &[x.0])
    }

    /// Repeats each row `times` times consecutively: row `i·times + k` is row `i`.
    pub fn repeat_rows(&mut self, x: Var, times: usize) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(rows * times * cols);
        for i in 0..rows {
            for _ in 0..times {
                data.extend_from_slice(t.row(i));
            }
        }
        let value = Tensor::new(vec![rows * times, cols], data)?;
        self.push(value, Op::RepeatRows(x.0, times), &[x.0])
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
        }

        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if !g.is_finite() {
                    return Err(Error::NonFinite {
                        op: "backward",
                        node: i,
                    });
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        let out = &node.value;
        let gd = g.data();

        // Accumulates into the gradient buffer of node `j`.
        fn slot<'a>(grads: &'a mut [Option<Tensor>], j: usize, shape: &[usize]) -> &'a mut [f64] {
            grads[j]
                .get_or_insert_with(|| Tensor::zeros(shape))
                .data_mut()
        }

        match node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let av = &self.nodes[a].value;
                let bv = &self.nodes[b].value;
                let (n, k) = matrix_dims("matmul", av)?;
                let m = bv.cols();
                if self.needs(a) {
                    gemm_nt(gd, bv.data(), slot(grads, a, av.shape()), n, k, m);
                }
                if self.needs(b) {
                    gemm_tn(av.data(), gd, slot(grads, b, bv.shape()), n, k, m);
                }
            }
            Op::Add(a, b, kind) | Op::Sub(a, b, kind) => {
                let sign = if matches!(node.op, Op::Sub(..)) {
                    -1.0
                } else {
                    1.0
                };
                if self.needs(a) {
                    let s = slot(grads, a, out.shape());
                    for (o, &v) in s.iter_mut().zip(gd) {
                        *o += v;
                    }
                }
                if self.needs(b) {
                    let cols = out.cols();
                    let shape = self.nodes[b].value.shape().to_vec();
                    let scaled: Vec<f64> = gd.iter().map(|v| v * sign).collect();
                    reduce_broadcast(&scaled, kind, cols, slot(grads, b, &shape));
                }
            }
            Op::Mul(a, b, kind) => {
                let av = &self.nodes[a].value;
                let bv = &self.nodes[b].value;
                if self.needs(a) {
                    let gb = broadcast_apply(g, bv, kind, |x, y| x * y);
                    let s = slot(grads, a, av.shape());
                    for (o, &v) in s.iter_mut().zip(gb.data()) {
                        *o += v;
                    }
                }
                if self.needs(b) {
                    let ga: Vec<f64> = gd.iter().zip(av.data()).map(|(x, y)| x * y).collect();
                    let shape = bv.shape().to_vec();
                    reduce_broadcast(&ga, kind, av.cols(), slot(grads, b, &shape));
                }
            }
            Op::Scale(x, c) => self.elementwise(x, g, grads, |_, _, gv| gv * c),
            Op::AddScalar(x) => self.elementwise(x, g, grads, |_, _, gv| gv),
            Op::Relu(x) => {
                self.elementwise(x, g, grads, |xv, _, gv| if xv > 0.0 { gv } else { 0.0 })
            }
            Op::Tanh(x) => self.elementwise_out(x, g, out, grads, |y, gv| gv * (1.0 - y * y)),
            Op::Exp(x) => self.elementwise_out(x, g, out, grads, |y, gv| gv * y),
            Op::Log(x) => self.elementwise(x, g, grads, |xv, _, gv| gv / xv),
            Op::Softplus(x) => self.elementwise(x, g, grads, |xv, _, gv| gv * sigmoid(xv)),
            Op::Sigmoid(x) => self.elementwise_out(x, g, out, grads, |y, gv| gv * y * (1.0 - y)),
            Op::Square(x) => self.elementwise(x, g, grads, |xv, _, gv| 2.0 * xv * gv),
            Op::Clamp(x, lo, hi) => {
                self.elementwise(
                    x,
                    g,
                    grads,
                    |xv, _, gv| {
                        if xv >= lo && xv <= hi {
                            gv
                        } else {
                            0.0
                        }
                    },
                )
            }
            Op::Sum(x) | Op::Mean(x) => {
                let n = self.nodes[x].value.numel();
                let scale = if matches!(node.op, Op::Mean(_)) {
                    1.0 / n as f64
                } else {
                    1.0
                };
                let gv = gd[0] * scale;
                let shape = self.nodes[x].value.shape().to_vec();
                for o in slot(grads, x, &shape).iter_mut() {
                    *o += gv;
                }
            }
            Op::SumCols(x) => {
                let xv = &self.nodes[x].value;
                let cols = xv.cols();
                let s = slot(grads, x, xv.shape());
                for (j, o) in s.iter_mut().enumerate() {
                    *o += gd[j / cols];
                }
            }
            Op::LogSoftmax(x) => {
                let cols = out.cols();
                let s = slot(grads, x, out.shape());
                for r in 0..out.rows() {
                    let grow = &gd[r * cols..(r + 1) * cols];
                    let yrow = out.row(r);
                    let gsum: f64 = grow.iter().sum();
                    for c in 0..cols {
                        s[r * cols + c] += grow[c] - yrow[c].exp() * gsum;
                    }
                }
            }
            Op::SliceCols(x, start) => {
                let xv = &self.nodes[x].value;
                let (xc, w) = (xv.cols(), out.cols());
                let s = slot(grads, x, xv.shape());
                for r in 0..out.rows() {
                    for c in 0..w {
                        s[r * xc + start + c] += gd[r * w + c];
                    }
                }
            }
            Op::Slice(x, start) => {
                let shape = self.nodes[x].value.shape().to_vec();
                let s = slot(grads, x, &shape);
                for (o, &v) in s[start..start + gd.len()].iter_mut().zip(gd) {
                    *o += v;
                }
            }
            Op::Reshape(x) => {
                let shape = self.nodes[x].value.shape().to_vec();
                for (o, &v) in slot(grads, x, &shape).iter_mut().zip(gd) {
                    *o += v;
                }
            }
            Op::RepeatRows(x, times) => {
                let xv = &self.nodes[x].value;
                let cols = xv.cols();
                let s = slot(grads, x, xv.shape());
                for (r, grow) in gd.chunks(cols).enumerate() {
                    let dst = &mut s[(r / times) * cols..(r / times + 1) * cols];
                    for (o, &v) in dst.iter_mut().zip(grow) {
                        *o += v;
                    }
                }
            }
        }
        Ok(())
    }

    fn elementwise(
        &self,
        x: usize,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
        f: impl Fn(f64, usize, f64) -> f64,
    ) {
        let xv = &self.nodes[x].value;
        let s = grads[x]
            .get_or_insert_with(|| Tensor::zeros(xv.shape()))
            .data_mut();
        for (j, ((o, &xval), &gv)) in s.iter_mut().zip(xv.data()).zip(g.data()).enumerate() {
            *o += f(xval, j, gv);
        }
    }

    fn elementwise_out(
        &self,
        x: usize,
        g: &Tensor,
        out: &Tensor,
        grads: &mut [Option<Tensor>],
        f: impl Fn(f64, f64) -> f64,
    ) {
        let shape = self.nodes[x].value.shape();
        let s = grads[x]
            .get_or_insert_with(|| Tensor::zeros(shape))
            .data_mut();
        for ((o, &y), &gv) in s.iter_mut().zip(out.data()).zip(g.data()) {
            *o += f(y, gv);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec(v: &[f64]) -> Tensor {
        Tensor::vector(v.to_vec())
    }

    #[test]
    fn relu_forward() {
        let mut t = Tape::new();
        let x = t.constant(vec(&[-1.0, 0.0, 2.0]));
        let y = t.relu(x).unwrap();
        assert_eq!(t.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn log_softmax_of_equal_logits() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
        let y = t.log_softmax(x).unwrap();
        for &v in t.value(y).data() {
            assert!((v + std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(vec(&[3.0]));
        let sq = t.square(x).unwrap();
        let loss = t.sum(sq).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn relu_subgradient_is_zero_for_negative_inputs() {
        let mut t = Tape::new();
        let x = t.leaf(vec(&[-1.0, 2.0]));
        let r = t.relu(x).unwrap();
        let loss = t.sum(r).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut t = Tape::new();
        let x = t.leaf(vec(&[2.0]));
        let y = t.mul(x, x).unwrap();
        let z = t.add(y, x).unwrap();
        let loss = t.sum(z).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[5.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(vec(&[1.0, 2.0]));
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(&[2, 3]));
        let b = t.leaf(Tensor::zeros(&[2, 3]));
        match t.matmul(a, b) {
            Err(Error::Shape { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("expected shape error, got {:?}", other.map(|v| v.id())),
        }
    }

    #[test]
    fn log_of_zero_aborts_with_node_id() {
        let mut t = Tape::new();
        let x = t.leaf(vec(&[0.0]));
        match t.log(x) {
            Err(Error::NonFinite { op, node }) => {
                assert_eq!(op, "log");
                assert_eq!(node, 1);
            }
            _ => panic!("expected non-finite error"),
        }
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(vec(&[1.0, 2.0]));
        let x = t.leaf(vec(&[3.0, 4.0]));
        let p = t.mul(c, x).unwrap();
        let loss = t.sum(p).unwrap();
        let g = t.backward(loss).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn row_broadcast_gradient_sums_over_rows() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(&[3, 2]));
        let b = t.leaf(vec(&[1.0, -1.0]));
        let s = t.add(a, b).unwrap();
        let loss = t.sum(s).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(b).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn repeat_rows_layout() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap());
        let r = t.repeat_rows(x, 3).unwrap();
        assert_eq!(t.value(r).data(), &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        let w = t.constant(Tensor::matrix(6, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let p = t.mul(r, w).unwrap();
        let loss = t.sum(p).unwrap();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[6.0, 15.0]);
    }
}
