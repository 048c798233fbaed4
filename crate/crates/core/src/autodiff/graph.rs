//! Tape of tensor operations with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the tape order is a
//! topological order and the backward pass is a single reverse sweep.

use std::collections::HashMap;

use crate::autodiff::params::{GradTable, ParamStore};
use crate::error::{Error, Result};
use crate::rng::ModelRng;
use crate::tensor::{matmul_into, transpose, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<F> {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// `x + bias` with a 1-D bias repeated over every row.
    AddRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Concat(Vec<NodeId>),
    Slice { x: NodeId, start: usize },
    Sigmoid(NodeId),
    Tanh(NodeId),
    SumAxis { x: NodeId, axis: usize },
    Scale(NodeId, F),
    Reshape(NodeId),
    Dropout { x: NodeId, mask: Vec<F> },
    LogSoftmax(NodeId),
    ClampMin { x: NodeId, lo: F },
}

#[derive(Clone, Debug)]
struct Node<F> {
    value: Tensor<F>,
    op: Op<F>,
    param: Option<String>,
}

/// One recorded forward evaluation.
pub struct Graph<F> {
    nodes: Vec<Node<F>>,
    params: HashMap<String, NodeId>,
    dropout_rng: Option<ModelRng>,
}

impl<F: Scalar> Default for Graph<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Graph<F> {
    /// Inference graph: dropout is the identity.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            dropout_rng: None,
        }
    }

    /// Training graph: dropout draws masks from `rng`.
    pub fn training(rng: ModelRng) -> Self {
        Self {
            dropout_rng: Some(rng),
            ..Self::new()
        }
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    /// Returns the dropout generator, advanced past every mask drawn so far.
    pub fn take_rng(&mut self) -> Option<ModelRng> {
        self.dropout_rng.take()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>, kind: &'static str) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: kind });
        }
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor<F>) -> Result<NodeId> {
        self.push(value, Op::Leaf, "constant")
    }

    /// Leaf for a registered parameter. Each name maps to a single node per graph.
    pub fn param(&mut self, store: &ParamStore<F>, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.params.get(name) {
            return Ok(id);
        }
        let value = store
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))?
            .clone();
        let id = self.push(value, Op::Leaf, "param")?;
        self.nodes[id.0].param = Some(name.to_string());
        self.params.insert(name.to_string(), id);
        Ok(id)
    }

    fn shape_err(&self, op: &'static str, a: NodeId, b: NodeId) -> Error {
        Error::Shape {
            op,
            lhs: self.shape(a).to_vec(),
            rhs: self.shape(b).to_vec(),
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.shape_err("matmul", a, b));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![F::zero(); m * n];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), "matmul")
    }

    fn zip_same(&mut self, a: NodeId, b: NodeId, kind: &'static str, f: impl Fn(F, F) -> F) -> Result<Tensor<F>> {
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_err(kind, a, b));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(self.shape(a).to_vec(), data)
    }

    /// Elementwise sum; a 1-D right operand whose length equals the left
    /// operand's last extent is added to every row.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb && sb.len() == 1 && sa.len() >= 2 && sa[sa.len() - 1] == sb[0] {
            let bias = self.value(b).data().to_vec();
            let mut out = self.value(a).clone();
            for row in out.data_mut().chunks_mut(bias.len()) {
                for (o, &bv) in row.iter_mut().zip(&bias) {
                    *o = *o + bv;
                }
            }
            return self.push(out, Op::AddRow(a, b), "add");
        }
        let out = self.zip_same(a, b, "add", |x, y| x + y)?;
        self.push(out, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.zip_same(a, b, "subtract", |x, y| x - y)?;
        self.push(out, Op::Sub(a, b), "subtract")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.zip_same(a, b, "elementwise-multiply", |x, y| x * y)?;
        self.push(out, Op::Mul(a, b), "elementwise-multiply")
    }

    /// `x · W + b` for `W: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Config("concat of zero inputs".into()))?;
        let lead = self.shape(first)[..self.shape(first).len() - 1].to_vec();
        let rows = self.value(first).rows();
        let mut width = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[..s.len() - 1] != lead[..] {
                return Err(self.shape_err("concat-last-axis", first, p));
            }
            width += s[s.len() - 1];
        }
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row(r));
            }
        }
        let mut shape = lead;
        shape.push(width);
        self.push(Tensor::new(shape, out)?, Op::Concat(parts.to_vec()), "concat-last-axis")
    }

    /// Columns `start..end` of the last axis.
    pub fn slice(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let s = self.shape(x).to_vec();
        let cols = s[s.len() - 1];
        if start >= end || end > cols {
            return Err(Error::Shape {
                op: "slice",
                lhs: s,
                rhs: vec![start, end],
            });
        }
        let v = self.value(x);
        let out: Vec<F> = (0..v.rows())
            .flat_map(|r| v.row(r)[start..end].iter().copied())
            .collect();
        let mut shape = s;
        *shape.last_mut().expect("rank >= 1") = end - start;
        self.push(Tensor::new(shape, out)?, Op::Slice { x, start }, "slice")
    }

    fn map(&mut self, x: NodeId, op: Op<F>, kind: &'static str, f: impl Fn(F) -> F) -> Result<NodeId> {
        let v = self.value(x);
        let out = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&a| f(a)).collect())?;
        self.push(out, op, kind)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.map(x, Op::Sigmoid(x), "sigmoid", |a| F::one() / (F::one() + (-a).exp()))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.map(x, Op::Tanh(x), "tanh", |a| a.tanh())
    }

    pub fn scale(&mut self, x: NodeId, c: F) -> Result<NodeId> {
        self.map(x, Op::Scale(x, c), "scale", |a| a * c)
    }

    pub fn clamp_min(&mut self, x: NodeId, lo: F) -> Result<NodeId> {
        self.map(x, Op::ClampMin { x, lo }, "clamp-min", |a| a.max(lo))
    }

    /// Sums out `axis`; a rank-1 input reduces to shape `[1]`.
    pub fn sum_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(Error::Shape {
                op: "sum-over-axis",
                lhs: s,
                rhs: vec![axis],
            });
        }
        let (outer, len, inner) = axis_split(&s, axis);
        let v = self.value(x).data();
        let mut out = vec![F::zero(); outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let base = (o * len + a) * inner;
                for i in 0..inner {
                    out[o * inner + i] = out[o * inner + i] + v[base + i];
                }
            }
        }
        let mut shape = s;
        shape.remove(axis);
        if shape.is_empty() {
            shape.push(1);
        }
        self.push(Tensor::new(shape, out)?, Op::SumAxis { x, axis }, "sum-over-axis")
    }

    /// Sum of every entry, shape `[1]`.
    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        let flat = self.reshape(x, &[self.value(x).len()])?;
        self.sum_axis(flat, 0)
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let out = self.value(x).clone().reshaped(shape)?;
        self.push(out, Op::Reshape(x), "reshape")
    }

    /// Inverted dropout. Identity on inference graphs and for `p == 0`.
    pub fn dropout(&mut self, x: NodeId, p: f64) -> Result<NodeId> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} outside [0, 1)")));
        }
        let Some(rng) = self.dropout_rng.as_mut() else {
            return Ok(x);
        };
        if p == 0.0 {
            return Ok(x);
        }
        let keep = F::from_f64_lossy(1.0 / (1.0 - p));
        let n = self.nodes[x.0].value.len();
        let mask: Vec<F> = (0..n)
            .map(|_| if rng.unit() < p { F::zero() } else { keep })
            .collect();
        let v = self.value(x);
        let out = Tensor::new(
            v.shape().to_vec(),
            v.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect(),
        )?;
        self.push(out, Op::Dropout { x, mask }, "dropout")
    }

    /// Log-softmax over the last axis, shifted by the row maximum.
    pub fn log_softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        let mut out = Vec::with_capacity(v.len());
        for r in 0..v.rows() {
            let row = v.row(r);
            let max = row.iter().copied().fold(F::neg_infinity(), F::max);
            let log_norm = row.iter().map(|&a| (a - max).exp()).fold(F::zero(), |s, e| s + e).ln();
            out.extend(row.iter().map(|&a| (a - max) - log_norm));
        }
        let out = Tensor::new(v.shape().to_vec(), out)?;
        self.push(out, Op::LogSoftmax(x), "stable-log-softmax")
    }

    /// Gradients of `loss` with respect to every node, indexed by node.
    pub fn backward_nodes(&self, loss: NodeId) -> Result<Vec<Option<Tensor<F>>>> {
        if self.value(loss).len() != 1 {
            return Err(Error::NonScalarLoss(self.shape(loss).to_vec()));
        }
        let mut grads: Vec<Option<Tensor<F>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), F::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let out = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (sa, sb) = (self.shape(*a), self.shape(*b));
                    let (m, k, n) = (sa[0], sa[1], sb[1]);
                    let bt = transpose(self.value(*b).data(), k, n);
                    let mut ga = vec![F::zero(); m * k];
                    matmul_into(g.data(), &bt, &mut ga, m, n, k);
                    let at = transpose(self.value(*a).data(), m, k);
                    let mut gb = vec![F::zero(); k * n];
                    matmul_into(&at, g.data(), &mut gb, k, m, n);
                    accumulate(&mut grads, *a, Tensor::new(vec![m, k], ga)?);
                    accumulate(&mut grads, *b, Tensor::new(vec![k, n], gb)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::AddRow(a, b) => {
                    let w = self.value(*b).len();
                    let mut gb = vec![F::zero(); w];
                    for row in g.data().chunks(w) {
                        for (s, &v) in gb.iter_mut().zip(row) {
                            *s = *s + v;
                        }
                    }
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, Tensor::vector(gb));
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, map_tensor(&g, |v| -v));
                }
                Op::Mul(a, b) => {
                    let ga = zip_tensor(&g, self.value(*b), |x, y| x * y);
                    let gb = zip_tensor(&g, self.value(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Concat(parts) => {
                    let rows = g.rows();
                    let total = g.cols();
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        let mut gp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            gp.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                        }
                        offset += w;
                        accumulate(&mut grads, *p, Tensor::new(self.shape(*p).to_vec(), gp)?);
                    }
                }
                Op::Slice { x, start } => {
                    let src = self.value(*x);
                    let (cols, w) = (src.cols(), g.cols());
                    let mut gx = vec![F::zero(); src.len()];
                    for r in 0..g.rows() {
                        gx[r * cols + start..r * cols + start + w].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *x, Tensor::new(src.shape().to_vec(), gx)?);
                }
                Op::Sigmoid(x) => {
                    let gx = zip_tensor(&g, out, |d, y| d * y * (F::one() - y));
                    accumulate(&mut grads, *x, gx);
                }
                Op::Tanh(x) => {
                    let gx = zip_tensor(&g, out, |d, y| d * (F::one() - y * y));
                    accumulate(&mut grads, *x, gx);
                }
                Op::SumAxis { x, axis } => {
                    let s = self.shape(*x);
                    let (outer, len, inner) = axis_split(s, *axis);
                    let mut gx = vec![F::zero(); outer * len * inner];
                    for o in 0..outer {
                        for a in 0..len {
                            let base = (o * len + a) * inner;
                            gx[base..base + inner].copy_from_slice(&g.data()[o * inner..(o + 1) * inner]);
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::new(s.to_vec(), gx)?);
                }
                Op::Scale(x, c) => {
                    let c = *c;
                    accumulate(&mut grads, *x, map_tensor(&g, |v| v * c));
                }
                Op::Reshape(x) => {
                    accumulate(&mut grads, *x, g.clone().reshaped(self.shape(*x))?);
                }
                Op::Dropout { x, mask } => {
                    let gx = Tensor::new(
                        g.shape().to_vec(),
                        g.data().iter().zip(mask).map(|(&d, &m)| d * m).collect(),
                    )?;
                    accumulate(&mut grads, *x, gx);
                }
                Op::LogSoftmax(x) => {
                    let c = out.cols();
                    let mut gx = Vec::with_capacity(out.len());
                    for r in 0..out.rows() {
                        let gr = g.row(r);
                        let total = gr.iter().copied().fold(F::zero(), |s, v| s + v);
                        gx.extend(gr.iter().zip(out.row(r)).map(|(&d, &y)| d - y.exp() * total));
                    }
                    debug_assert_eq!(gx.len() % c, 0);
                    accumulate(&mut grads, *x, Tensor::new(out.shape().to_vec(), gx)?);
                }
                Op::ClampMin { x, lo } => {
                    let lo = *lo;
                    let gx = zip_tensor(&g, self.value(*x), |d, a| if a > lo { d } else { F::zero() });
                    accumulate(&mut grads, *x, gx);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    /// Adds `d loss / d param` into `table` for every parameter leaf in this graph.
    pub fn backward(&self, loss: NodeId, table: &mut GradTable<F>) -> Result<()> {
        let grads = self.backward_nodes(loss)?;
        for (idx, g) in grads.iter().enumerate() {
            if let (Some(name), Some(g)) = (&self.nodes[idx].param, g) {
                table.accumulate(name, g);
            }
        }
        Ok(())
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn accumulate<F: Scalar>(grads: &mut [Option<Tensor<F>>], id: NodeId, g: Tensor<F>) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn map_tensor<F: Scalar>(t: &Tensor<F>, f: impl Fn(F) -> F) -> Tensor<F> {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect()).expect("same shape")
}

fn zip_tensor<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
    .expect("same shape")
}
