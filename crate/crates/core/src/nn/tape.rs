//! Tape-based reverse-mode differentiation over [`Tensor2`] values.
//!
//! Every op appends a node holding its output value, so node ids are a
//! topological order by construction. [`Tape::backward`] walks the nodes once
//! in reverse, skipping subgraphs that do not depend on a trainable leaf.

use super::Tensor2;
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Silu,
    Gelu,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x / (1.0 + (-x).exp()),
            Activation::Gelu => {
                let u = GELU_C * (x + 0.044_715 * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            }
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Gelu => {
                let u = GELU_C * (x + 0.044_715 * x * x * x);
                let th = u.tanh();
                0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * 0.044_715 * x * x)
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Silu => "silu",
            Activation::Gelu => "gelu",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// `b` has the same shape as `a` or is a broadcast row.
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Constant per-column affine map; only the scale matters for gradients.
    AffineCols(NodeId, Vec<f64>),
    Act(NodeId, Activation),
    /// Row-wise normalization; caches the normalized rows and reciprocal std.
    LayerNorm {
        x: NodeId,
        xhat: Tensor2,
        inv_std: Vec<f64>,
    },
    Concat(Vec<NodeId>),
    SliceCols(NodeId, usize),
    GatherRows(NodeId, Vec<usize>),
    Mse(NodeId, NodeId),
    SumSquares(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor2,
    op: Op,
    requires_grad: bool,
}

/// Records forward values and the ops that produced them.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar output with respect to every node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor2>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor2> {
        self.grads[id.0].as_ref()
    }

    /// Gradient of `id`, or zeros of the given shape when the output does not depend on it.
    pub fn get_or_zeros(&self, id: NodeId, shape: (usize, usize)) -> Tensor2 {
        self.get(id)
            .cloned()
            .unwrap_or_else(|| Tensor2::zeros(shape.0, shape.1))
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor2> {
        self.grads[id.0].take()
    }
}

fn shape_err(op: &'static str, a: &Tensor2, b: &Tensor2) -> Error {
    Error::Shape {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

/// True when `b` is a row broadcast against `a`; errors on incompatible shapes.
fn broadcast_kind(op: &'static str, a: &Tensor2, b: &Tensor2) -> Result<bool> {
    if a.shape() == b.shape() {
        Ok(false)
    } else if b.rows() == 1 && b.cols() == a.cols() {
        Ok(true)
    } else {
        Err(shape_err(op, a, b))
    }
}

fn zip_broadcast(a: &Tensor2, b: &Tensor2, f: impl Fn(f64, f64) -> f64) -> Tensor2 {
    let cols = a.cols();
    let mut out = a.clone();
    if b.rows() == a.rows() {
        for (o, &y) in out.data_mut().iter_mut().zip(b.data()) {
            *o = f(*o, y);
        }
    } else {
        for r in out.data_mut().chunks_exact_mut(cols.max(1)) {
            for (o, &y) in r.iter_mut().zip(b.data()) {
                *o = f(*o, y);
            }
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor2 {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor2, op: Op, requires_grad: bool, name: &str) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].requires_grad)
    }

    /// Trainable leaf (gradients are accumulated for it).
    pub fn leaf(&mut self, value: Tensor2) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor2) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        self.push(v, Op::MatMul(a, b), rg, "matmul")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        broadcast_kind("add", va, vb)?;
        let v = zip_broadcast(va, vb, |x, y| x + y);
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Add(a, b), rg, "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        broadcast_kind("sub", va, vb)?;
        let v = zip_broadcast(va, vb, |x, y| x - y);
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Sub(a, b), rg, "sub")
    }

    /// Elementwise product; `b` may be a broadcast row.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        broadcast_kind("mul", va, vb)?;
        let v = zip_broadcast(va, vb, |x, y| x * y);
        let rg = self.rg(&[a, b]);
        self.push(v, Op::Mul(a, b), rg, "mul")
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        let v = self.value(a).map(|x| x * s);
        let rg = self.rg(&[a]);
        self.push(v, Op::Scale(a, s), rg, "scale")
    }

    /// `y[:, j] = x[:, j] * scale[j] + shift[j]` with constant coefficients.
    pub fn affine_cols(&mut self, a: NodeId, scale: &[f64], shift: &[f64]) -> Result<NodeId> {
        let va = self.value(a);
        if scale.len() != va.cols() || shift.len() != va.cols() {
            return Err(Error::Shape {
                op: "affine_cols",
                lhs: va.shape(),
                rhs: (1, scale.len()),
            });
        }
        let mut v = va.clone();
        let cols = v.cols();
        for r in v.data_mut().chunks_exact_mut(cols.max(1)) {
            for j in 0..cols {
                r[j] = r[j] * scale[j] + shift[j];
            }
        }
        let rg = self.rg(&[a]);
        self.push(v, Op::AffineCols(a, scale.to_vec()), rg, "affine_cols")
    }

    pub fn act(&mut self, a: NodeId, f: Activation) -> Result<NodeId> {
        let v = self.value(a).map(|x| f.apply(x));
        let rg = self.rg(&[a]);
        self.push(v, Op::Act(a, f), rg, f.name())
    }

    pub fn silu(&mut self, a: NodeId) -> Result<NodeId> {
        self.act(a, Activation::Silu)
    }

    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        self.act(a, Activation::Gelu)
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.act(a, Activation::Relu)
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.act(a, Activation::Tanh)
    }

    /// Normalizes each row to zero mean and unit variance (no affine part).
    /// A constant row maps to zeros.
    pub fn layer_norm(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        let cols = va.cols();
        if cols == 0 {
            return Err(Error::Argument("layer_norm of an empty row".into()));
        }
        let mut xhat = va.clone();
        let mut inv_std = Vec::with_capacity(va.rows());
        for r in xhat.data_mut().chunks_exact_mut(cols) {
            let mean = r.iter().sum::<f64>() / cols as f64;
            let var = r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            for x in r.iter_mut() {
                *x = (*x - mean) * is;
            }
            inv_std.push(is);
        }
        let rg = self.rg(&[a]);
        let op = Op::LayerNorm {
            x: a,
            xhat: xhat.clone(),
            inv_std,
        };
        self.push(xhat, op, rg, "layer_norm")
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Argument("concat of zero tensors".into()))?;
        let rows = self.value(*first).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(shape_err("concat", self.value(*first), v));
            }
            cols += v.cols();
        }
        let mut out = Tensor2::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let v = &self.nodes[p.0].value;
            let c = v.cols();
            for r in 0..rows {
                out.data_mut()[r * cols + off..r * cols + off + c].copy_from_slice(v.row(r));
            }
            off += c;
        }
        let rg = self.rg(parts);
        self.push(out, Op::Concat(parts.to_vec()), rg, "concat")
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let va = self.value(a);
        if start + len > va.cols() {
            return Err(Error::Shape {
                op: "slice_cols",
                lhs: va.shape(),
                rhs: (start, len),
            });
        }
        let mut out = Tensor2::zeros(va.rows(), len);
        for r in 0..va.rows() {
            out.data_mut()[r * len..(r + 1) * len].copy_from_slice(&va.row(r)[start..start + len]);
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::SliceCols(a, start), rg, "slice_cols")
    }

    /// Output row `r` is input row `idx[r]`.
    pub fn gather_rows(&mut self, a: NodeId, idx: &[usize]) -> Result<NodeId> {
        let va = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= va.rows()) {
            return Err(Error::Argument(format!(
                "gather index {bad} out of range for {} rows",
                va.rows()
            )));
        }
        let cols = va.cols();
        let mut out = Tensor2::zeros(idx.len(), cols);
        for (r, &i) in idx.iter().enumerate() {
            out.data_mut()[r * cols..(r + 1) * cols].copy_from_slice(va.row(i));
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::GatherRows(a, idx.to_vec()), rg, "gather_rows")
    }

    /// Mean squared difference over all entries, as a 1x1 node.
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err("mse", va, vb));
        }
        let n = va.data().len().max(1) as f64;
        let s: f64 = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| (x - y).powi(2))
            .sum();
        let rg = self.rg(&[a, b]);
        self.push(Tensor2::scalar(s / n), Op::Mse(a, b), rg, "mse")
    }

    pub fn sum_squares(&mut self, a: NodeId) -> Result<NodeId> {
        let s: f64 = self.value(a).data().iter().map(|x| x * x).sum();
        let rg = self.rg(&[a]);
        self.push(Tensor2::scalar(s), Op::SumSquares(a), rg, "sum_squares")
    }

    /// Reverse pass from a 1x1 output node.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(Error::Argument(format!(
                "backward needs a scalar output, got {:?}",
                out.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor2>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor2::scalar(1.0));
        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads)?;
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor2>], id: NodeId, g: Tensor2) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &Tensor2, grads: &mut [Option<Tensor2>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    self.accumulate(grads, *a, g.matmul_t(false, vb, true)?);
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, va.matmul_t(true, g, false)?);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                self.accumulate(grads, *a, g.clone());
                if self.wants(*b) {
                    let gb = if self.value(*b).rows() == g.rows() {
                        g.clone()
                    } else {
                        g.sum_rows()
                    };
                    self.accumulate(grads, *b, gb.map(|x| sign * x));
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    self.accumulate(grads, *a, zip_broadcast(g, vb, |x, y| x * y));
                }
                if self.wants(*b) {
                    let ga = zip_broadcast(g, va, |x, y| x * y);
                    let gb = if vb.rows() == g.rows() { ga } else { ga.sum_rows() };
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.map(|x| x * s)),
            Op::AffineCols(a, scale) => {
                let mut ga = g.clone();
                let cols = ga.cols();
                for r in ga.data_mut().chunks_exact_mut(cols.max(1)) {
                    for (x, s) in r.iter_mut().zip(scale) {
                        *x *= s;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Act(a, f) => {
                let va = self.value(*a);
                let mut ga = g.clone();
                for (x, &v) in ga.data_mut().iter_mut().zip(va.data()) {
                    *x *= f.derivative(v);
                }
                self.accumulate(grads, *a, ga);
            }
            Op::LayerNorm { x, xhat, inv_std } => {
                let cols = g.cols();
                let n = cols as f64;
                let mut gx = g.clone();
                for (r, row) in gx.data_mut().chunks_exact_mut(cols).enumerate() {
                    let xh = xhat.row(r);
                    let mg = row.iter().sum::<f64>() / n;
                    let mgx = row.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
                    for (v, &h) in row.iter_mut().zip(xh) {
                        *v = inv_std[r] * (*v - mg - h * mgx);
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    if self.wants(p) {
                        let mut gp = Tensor2::zeros(g.rows(), c);
                        for r in 0..g.rows() {
                            gp.data_mut()[r * c..(r + 1) * c]
                                .copy_from_slice(&g.row(r)[off..off + c]);
                        }
                        self.accumulate(grads, p, gp);
                    }
                    off += c;
                }
            }
            Op::SliceCols(a, start) => {
                let va = self.value(*a);
                let mut ga = Tensor2::zeros(va.rows(), va.cols());
                let (len, cols) = (g.cols(), va.cols());
                for r in 0..g.rows() {
                    ga.data_mut()[r * cols + start..r * cols + start + len].copy_from_slice(g.row(r));
                }
                self.accumulate(grads, *a, ga);
            }
            Op::GatherRows(a, idx) => {
                let va = self.value(*a);
                let cols = va.cols();
                let mut ga = Tensor2::zeros(va.rows(), cols);
                for (r, &i) in idx.iter().enumerate() {
                    let dst = &mut ga.data_mut()[i * cols..(i + 1) * cols];
                    for (d, s) in dst.iter_mut().zip(g.row(r)) {
                        *d += s;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::Mse(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let k = 2.0 * g.item() / va.data().len().max(1) as f64;
                let diff = Tensor2::from_vec(
                    va.rows(),
                    va.cols(),
                    va.data().iter().zip(vb.data()).map(|(x, y)| k * (x - y)).collect(),
                )?;
                if self.wants(*b) {
                    self.accumulate(grads, *b, diff.map(|x| -x));
                }
                self.accumulate(grads, *a, diff);
            }
            Op::SumSquares(a) => {
                let k = 2.0 * g.item();
                let ga = self.value(*a).map(|x| k * x);
                self.accumulate(grads, *a, ga);
            }
        }
        Ok(())
    }
}
