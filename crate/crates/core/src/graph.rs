//! Operation record with reverse-mode differentiation.
//!
//! A [`Graph`] is an append-only list of nodes. Each node stores its forward
//! value and the operation that produced it; node ids are indices, so the
//! record order is already a topological order and [`Graph::backward`] simply
//! walks it in reverse. Leaves may borrow their value (model parameters) or
//! own it (inputs, masks).

use alloc::borrow::Cow;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Mean,
}

/// Pointwise operations addressable by name.
///
/// Names: `hadamard`, `add`, `sub`, `sigmoid`, `tanh`, and `scale:<factor>`
/// (plain `scale` means a factor of 1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Hadamard,
    Add,
    Sub,
    Sigmoid,
    Tanh,
    Scale(f64),
}

impl Elementwise {
    fn arity(self) -> usize {
        match self {
            Elementwise::Hadamard | Elementwise::Add | Elementwise::Sub => 2,
            _ => 1,
        }
    }
}

impl FromStr for Elementwise {
    type Err = Error;

    fn from_str(name: &str) -> Result<Self> {
        let op = match name {
            "hadamard" => Elementwise::Hadamard,
            "add" => Elementwise::Add,
            "sub" => Elementwise::Sub,
            "sigmoid" => Elementwise::Sigmoid,
            "tanh" => Elementwise::Tanh,
            "scale" => Elementwise::Scale(1.0),
            other => match other.strip_prefix("scale:").map(str::parse::<f64>) {
                Some(Ok(factor)) => Elementwise::Scale(factor),
                _ => return Err(Error::UnknownOp(String::from(other))),
            },
        };
        Ok(op)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Custom {
        x: NodeId,
        derivative: fn(f64) -> f64,
    },
    Softmax(NodeId),
    CrossEntropy {
        logits: NodeId,
        target: usize,
    },
    Conv1d {
        seq: NodeId,
        kernels: NodeId,
        bias: NodeId,
    },
    Pool {
        x: NodeId,
        mode: PoolMode,
        start: usize,
        end: usize,
        argmax: Vec<usize>,
    },
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        shift: NodeId,
        normalized: Vec<f64>,
        inv_std: f64,
    },
    Concat(Vec<NodeId>),
    StackColumns(Vec<NodeId>),
    GatherRows {
        table: NodeId,
        indices: Vec<usize>,
    },
    AddColumn {
        matrix: NodeId,
        column: NodeId,
    },
    Sum(NodeId),
    Reshape(NodeId),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Layer-norm epsilon inside the square root of the variance.
pub const LAYER_NORM_EPS: f64 = 1e-6;

#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn softmax_values(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| libm::exp(v - max)).collect();
    let z: f64 = out.iter().sum();
    for v in &mut out {
        *v /= z;
    }
    out
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
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

    fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[NodeId], name: &str) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("output of {name}")));
        }
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn push_leaf(&mut self, value: Cow<'a, Tensor>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Differentiable leaf owning its value.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(Cow::Owned(value), true)
    }

    /// Differentiable leaf borrowing its value, used for model parameters.
    pub fn param(&mut self, value: &'a Tensor) -> NodeId {
        self.push_leaf(Cow::Borrowed(value), true)
    }

    /// Leaf that never receives a gradient (masks, fixed inputs).
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(Cow::Owned(value), false)
    }

    /// Matrix product. `b` may be a matrix `[q×r]` or a vector `[q]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || !(sb.len() == 1 || sb.len() == 2) || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (p, q) = (sa[0], sa[1]);
        let r = if sb.len() == 2 { sb[1] } else { 1 };
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; p * r];
        for i in 0..p {
            let arow = &av[i * q..(i + 1) * q];
            let orow = &mut out[i * r..(i + 1) * r];
            for (k, &aik) in arow.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let brow = &bv[k * r..(k + 1) * r];
                for (o, &bkj) in orow.iter_mut().zip(brow) {
                    *o += aik * bkj;
                }
            }
        }
        let shape = if sb.len() == 2 { vec![p, r] } else { vec![p] };
        let value = Tensor::new(shape, out)?;
        self.push(value, Op::MatMul(a, b), &[a, b], "matmul")
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(Error::shape("transpose", s, &[]));
        }
        let (rows, cols) = (s[0], s[1]);
        let v = self.value(a).data();
        let mut out = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                out[j * rows + i] = v[i * cols + j];
            }
        }
        let value = Tensor::new(vec![cols, rows], out)?;
        self.push(value, Op::Transpose(a), &[a], "transpose")
    }

    fn binary(&mut self, a: NodeId, b: NodeId, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(name, self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        self.push(value, op, &[a, b], name)
    }

    fn unary(&mut self, a: NodeId, name: &'static str, f: impl Fn(f64) -> f64, op: Op) -> Result<NodeId> {
        let data = self.value(a).data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        self.push(value, op, &[a], name)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "hadamard", |x, y| x * y, Op::Hadamard(a, b))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.unary(a, "scale", |x| x * factor, Op::Scale(a, factor))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.unary(a, "add_scalar", |x| x + c, Op::AddScalar(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, "sigmoid", sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, "tanh", libm::tanh, Op::Tanh(a))
    }

    /// Pointwise function with a caller-supplied derivative (evaluated at the input).
    pub fn custom_unary(&mut self, a: NodeId, f: fn(f64) -> f64, derivative: fn(f64) -> f64) -> Result<NodeId> {
        self.unary(a, "custom", f, Op::Custom { x: a, derivative })
    }

    /// Dispatches a pointwise operation by kind; arity is checked.
    pub fn elementwise(&mut self, op: Elementwise, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.len() != op.arity() {
            return Err(Error::contract(format!(
                "{op:?} takes {} operand(s), got {}",
                op.arity(),
                inputs.len()
            )));
        }
        match op {
            Elementwise::Hadamard => self.hadamard(inputs[0], inputs[1]),
            Elementwise::Add => self.add(inputs[0], inputs[1]),
            Elementwise::Sub => self.sub(inputs[0], inputs[1]),
            Elementwise::Sigmoid => self.sigmoid(inputs[0]),
            Elementwise::Tanh => self.tanh(inputs[0]),
            Elementwise::Scale(c) => self.scale(inputs[0], c),
        }
    }

    /// Softmax of a vector, computed with max-subtraction.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        let s = self.shape(a);
        if s.len() != 1 || s[0] == 0 {
            return Err(Error::contract(format!("softmax needs a non-empty vector, got shape {s:?}")));
        }
        let value = Tensor::vector(softmax_values(self.value(a).data()));
        self.push(value, Op::Softmax(a), &[a], "softmax")
    }

    /// `-log softmax(logits)[target]` as a scalar.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let s = self.shape(logits);
        if s.len() != 1 || s[0] == 0 {
            return Err(Error::contract(format!("cross_entropy needs a non-empty vector, got {s:?}")));
        }
        if target >= s[0] {
            return Err(Error::contract(format!("label index {target} out of range for {} classes", s[0])));
        }
        let x = self.value(logits).data();
        let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(x.iter().map(|v| libm::exp(v - max)).sum::<f64>());
        let value = Tensor::scalar(lse - x[target]);
        self.push(value, Op::CrossEntropy { logits, target }, &[logits], "cross_entropy")
    }

    /// Same-length 1D convolution: `seq [d×n]`, `kernels [f×d×w]`, `bias [f]` → `[f×n]`.
    ///
    /// The sequence is zero padded by `w / 2` columns on each side; `w` must be odd.
    pub fn conv1d(&mut self, seq: NodeId, kernels: NodeId, bias: NodeId) -> Result<NodeId> {
        let (ss, ks, bs) = (self.shape(seq), self.shape(kernels), self.shape(bias));
        if ss.len() != 2 || ks.len() != 3 || ks[1] != ss[0] {
            return Err(Error::shape("conv1d", ss, ks));
        }
        if bs != [ks[0]] {
            return Err(Error::shape("conv1d bias", bs, &ks[..1]));
        }
        let (d, n) = (ss[0], ss[1]);
        let (f, w) = (ks[0], ks[2]);
        if w % 2 == 0 {
            return Err(Error::contract(format!("conv1d window must be odd, got {w}")));
        }
        let pad = w / 2;
        let (sv, kv, bv) = (self.value(seq).data(), self.value(kernels).data(), self.value(bias).data());
        let mut out = vec![0.0; f * n];
        for o in 0..f {
            let orow = &mut out[o * n..(o + 1) * n];
            orow.iter_mut().for_each(|v| *v = bv[o]);
            for c in 0..d {
                let srow = &sv[c * n..(c + 1) * n];
                for k in 0..w {
                    let kval = kv[(o * d + c) * w + k];
                    if kval == 0.0 {
                        continue;
                    }
                    // output i reads input i + k - pad
                    let lo = pad.saturating_sub(k);
                    let hi = (n + pad).saturating_sub(k).min(n);
                    for i in lo..hi {
                        orow[i] += kval * srow[i + k - pad];
                    }
                }
            }
        }
        let value = Tensor::new(vec![f, n], out)?;
        self.push(value, Op::Conv1d { seq, kernels, bias }, &[seq, kernels, bias], "conv1d")
    }

    /// Row-wise max or mean over columns `start..end` of `x [d×n]`.
    ///
    /// An empty range yields the zero vector and passes no gradient.
    pub fn pool(&mut self, x: NodeId, mode: PoolMode, start: usize, end: usize) -> Result<NodeId> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::shape("pool", s, &[]));
        }
        let (d, n) = (s[0], s[1]);
        if start > end || end > n {
            return Err(Error::contract(format!("pool range {start}..{end} out of bounds for {n} columns")));
        }
        let v = self.value(x).data();
        let mut out = vec![0.0; d];
        let mut argmax = Vec::new();
        if start < end {
            match mode {
                PoolMode::Max => {
                    argmax.reserve(d);
                    for (i, o) in out.iter_mut().enumerate() {
                        let row = &v[i * n..(i + 1) * n];
                        let mut best = start;
                        for j in start + 1..end {
                            if row[j] > row[best] {
                                best = j;
                            }
                        }
                        *o = row[best];
                        argmax.push(best);
                    }
                }
                PoolMode::Mean => {
                    let len = (end - start) as f64;
                    for (i, o) in out.iter_mut().enumerate() {
                        *o = v[i * n + start..i * n + end].iter().sum::<f64>() / len;
                    }
                }
            }
        }
        let value = Tensor::vector(out);
        self.push(
            value,
            Op::Pool {
                x,
                mode,
                start,
                end,
                argmax,
            },
            &[x],
            "pool",
        )
    }

    /// Layer normalization of a vector followed by an elementwise affine map.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, shift: NodeId) -> Result<NodeId> {
        let s = self.shape(x);
        if s.len() != 1 || s[0] == 0 {
            return Err(Error::contract(format!("layer_norm needs a non-empty vector, got {s:?}")));
        }
        if self.shape(gain) != s || self.shape(shift) != s {
            return Err(Error::shape("layer_norm", s, self.shape(gain)));
        }
        let v = self.value(x).data();
        let d = v.len() as f64;
        let mean = v.iter().sum::<f64>() / d;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d;
        let inv_std = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
        let normalized: Vec<f64> = v.iter().map(|x| (x - mean) * inv_std).collect();
        let (gv, sv) = (self.value(gain).data(), self.value(shift).data());
        let out = normalized.iter().zip(gv).zip(sv).map(|((n, g), b)| n * g + b).collect();
        let value = Tensor::vector(out);
        let op = Op::LayerNorm {
            x,
            gain,
            shift,
            normalized,
            inv_std,
        };
        self.push(value, op, &[x, gain, shift], "layer_norm")
    }

    /// Concatenation along the first axis: vectors end to end, or matrices
    /// with equal column counts stacked vertically.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = parts.first().ok_or_else(|| Error::contract("concat of nothing"))?;
        let rank = self.shape(*first).len();
        if rank == 0 || rank > 2 {
            return Err(Error::shape("concat", self.shape(*first), &[]));
        }
        let cols = if rank == 2 { self.shape(*first)[1] } else { 1 };
        let mut rows = 0;
        for p in parts {
            let s = self.shape(*p);
            if s.len() != rank || (rank == 2 && s[1] != cols) {
                return Err(Error::shape("concat", self.shape(*first), s));
            }
            rows += s[0];
        }
        let mut out = Vec::with_capacity(rows * cols);
        for p in parts {
            out.extend_from_slice(self.value(*p).data());
        }
        let shape = if rank == 2 { vec![rows, cols] } else { vec![rows] };
        let value = Tensor::new(shape, out)?;
        self.push(value, Op::Concat(parts.to_vec()), parts, "concat")
    }

    /// Places equally sized vectors side by side as columns of a matrix.
    pub fn stack_columns(&mut self, columns: &[NodeId]) -> Result<NodeId> {
        let first = columns.first().ok_or_else(|| Error::contract("stack_columns of nothing"))?;
        let s0 = self.shape(*first).to_vec();
        if s0.len() != 1 {
            return Err(Error::shape("stack_columns", &s0, &[]));
        }
        let (d, m) = (s0[0], columns.len());
        let mut out = vec![0.0; d * m];
        for (j, c) in columns.iter().enumerate() {
            if self.shape(*c) != s0.as_slice() {
                return Err(Error::shape("stack_columns", &s0, self.shape(*c)));
            }
            for (i, v) in self.value(*c).data().iter().enumerate() {
                out[i * m + j] = *v;
            }
        }
        let value = Tensor::new(vec![d, m], out)?;
        self.push(value, Op::StackColumns(columns.to_vec()), columns, "stack_columns")
    }

    /// Selects rows of `table [V×d]`, giving `[k×d]`.
    pub fn gather_rows(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        let s = self.shape(table);
        if s.len() != 2 {
            return Err(Error::shape("gather_rows", s, &[]));
        }
        let (rows, cols) = (s[0], s[1]);
        if let Some(bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::contract(format!("row index {bad} out of range for {rows} rows")));
        }
        let tv = self.value(table).data();
        let mut out = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            out.extend_from_slice(&tv[i * cols..(i + 1) * cols]);
        }
        let value = Tensor::new(vec![indices.len(), cols], out)?;
        let op = Op::GatherRows {
            table,
            indices: indices.to_vec(),
        };
        self.push(value, op, &[table], "gather_rows")
    }

    /// Adds a `[d]` column to every column of `matrix [d×n]`.
    pub fn add_column(&mut self, matrix: NodeId, column: NodeId) -> Result<NodeId> {
        let (sm, sc) = (self.shape(matrix), self.shape(column));
        if sm.len() != 2 || sc.len() != 1 || sm[0] != sc[0] {
            return Err(Error::shape("add_column", sm, sc));
        }
        let n = sm[1];
        let cv = self.value(column).data();
        let mut out = self.value(matrix).data().to_vec();
        for (i, row) in out.chunks_mut(n).enumerate() {
            row.iter_mut().for_each(|v| *v += cv[i]);
        }
        let value = Tensor::new(sm.to_vec(), out)?;
        self.push(value, Op::AddColumn { matrix, column }, &[matrix, column], "add_column")
    }

    /// Sum of all entries as a scalar.
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a), &[a], "sum")
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(a).clone().reshape(shape.to_vec())?;
        self.push(value, Op::Reshape(a), &[a], "reshape")
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let loss_shape = self.shape(loss);
        if self.value(loss).numel() != 1 {
            return Err(Error::contract(format!("loss must be scalar, got shape {loss_shape:?}")));
        }
        let count = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; count];
        grads[loss.0] = Some(vec![1.0]);
        let mut acc = Accumulator {
            nodes: &self.nodes,
            grads: &mut grads,
        };
        for idx in (0..count).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = acc.grads[idx].take() else { continue };
            self.propagate(node, &g, &mut acc);
        }
        let leaves = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                if !matches!(n.op, Op::Leaf) || !n.needs_grad {
                    return None;
                }
                let data = grads.get_mut(i).and_then(Option::take)?;
                Some(Tensor::new(n.value.shape().to_vec(), data).expect("gradient shape"))
            })
            .collect();
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads: leaves, shapes })
    }

    fn propagate(&self, node: &Node<'a>, g: &[f64], acc: &mut Accumulator<'_, 'a>) {
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let sa = self.shape(*a);
                let (p, q) = (sa[0], sa[1]);
                let r = if self.shape(*b).len() == 2 { self.shape(*b)[1] } else { 1 };
                acc.with(*a, |da| {
                    for i in 0..p {
                        for k in 0..q {
                            let mut s = 0.0;
                            for j in 0..r {
                                s += g[i * r + j] * bv[k * r + j];
                            }
                            da[i * q + k] += s;
                        }
                    }
                });
                acc.with(*b, |db| {
                    for i in 0..p {
                        for k in 0..q {
                            let aik = av[i * q + k];
                            if aik == 0.0 {
                                continue;
                            }
                            for j in 0..r {
                                db[k * r + j] += aik * g[i * r + j];
                            }
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                let s = self.shape(*a);
                let (rows, cols) = (s[0], s[1]);
                acc.with(*a, |da| {
                    for i in 0..rows {
                        for j in 0..cols {
                            da[i * cols + j] += g[j * rows + i];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc.with(*a, |da| add_into(da, g));
                acc.with(*b, |db| add_into(db, g));
            }
            Op::Sub(a, b) => {
                acc.with(*a, |da| add_into(da, g));
                acc.with(*b, |db| db.iter_mut().zip(g).for_each(|(d, g)| *d -= g));
            }
            Op::Hadamard(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                acc.with(*a, |da| {
                    for i in 0..g.len() {
                        da[i] += g[i] * bv[i];
                    }
                });
                acc.with(*b, |db| {
                    for i in 0..g.len() {
                        db[i] += g[i] * av[i];
                    }
                });
            }
            Op::Scale(a, c) => acc.with(*a, |da| da.iter_mut().zip(g).for_each(|(d, g)| *d += c * g)),
            Op::AddScalar(a) | Op::Reshape(a) => acc.with(*a, |da| add_into(da, g)),
            Op::Sigmoid(a) => acc.with(*a, |da| {
                for i in 0..g.len() {
                    da[i] += g[i] * out[i] * (1.0 - out[i]);
                }
            }),
            Op::Tanh(a) => acc.with(*a, |da| {
                for i in 0..g.len() {
                    da[i] += g[i] * (1.0 - out[i] * out[i]);
                }
            }),
            Op::Custom { x, derivative } => {
                let xv = self.value(*x).data();
                acc.with(*x, |dx| {
                    for i in 0..g.len() {
                        dx[i] += g[i] * derivative(xv[i]);
                    }
                });
            }
            Op::Softmax(a) => {
                let dot: f64 = g.iter().zip(out).map(|(g, y)| g * y).sum();
                acc.with(*a, |da| {
                    for i in 0..g.len() {
                        da[i] += out[i] * (g[i] - dot);
                    }
                });
            }
            Op::CrossEntropy { logits, target } => {
                let p = softmax_values(self.value(*logits).data());
                acc.with(*logits, |dl| {
                    for (i, pi) in p.iter().enumerate() {
                        let onehot = if i == *target { 1.0 } else { 0.0 };
                        dl[i] += g[0] * (pi - onehot);
                    }
                });
            }
            Op::Conv1d { seq, kernels, bias } => {
                let (ss, ks) = (self.shape(*seq), self.shape(*kernels));
                let (d, n, f, w) = (ss[0], ss[1], ks[0], ks[2]);
                let pad = w / 2;
                let (sv, kv) = (self.value(*seq).data(), self.value(*kernels).data());
                acc.with(*bias, |db| {
                    for o in 0..f {
                        db[o] += g[o * n..(o + 1) * n].iter().sum::<f64>();
                    }
                });
                acc.with(*kernels, |dk| {
                    for o in 0..f {
                        let grow = &g[o * n..(o + 1) * n];
                        for c in 0..d {
                            let srow = &sv[c * n..(c + 1) * n];
                            for k in 0..w {
                                let lo = pad.saturating_sub(k);
                                let hi = (n + pad).saturating_sub(k).min(n);
                                let mut s = 0.0;
                                for i in lo..hi {
                                    s += grow[i] * srow[i + k - pad];
                                }
                                dk[(o * d + c) * w + k] += s;
                            }
                        }
                    }
                });
                acc.with(*seq, |ds| {
                    for o in 0..f {
                        let grow = &g[o * n..(o + 1) * n];
                        for c in 0..d {
                            let drow = &mut ds[c * n..(c + 1) * n];
                            for k in 0..w {
                                let kval = kv[(o * d + c) * w + k];
                                let lo = pad.saturating_sub(k);
                                let hi = (n + pad).saturating_sub(k).min(n);
                                for i in lo..hi {
                                    drow[i + k - pad] += kval * grow[i];
                                }
                            }
                        }
                    }
                });
            }
            Op::Pool {
                x,
                mode,
                start,
                end,
                argmax,
            } => {
                if start == end {
                    return;
                }
                let n = self.shape(*x)[1];
                acc.with(*x, |dx| match mode {
                    PoolMode::Max => {
                        for (i, &j) in argmax.iter().enumerate() {
                            dx[i * n + j] += g[i];
                        }
                    }
                    PoolMode::Mean => {
                        let len = (end - start) as f64;
                        for (i, gi) in g.iter().enumerate() {
                            for j in *start..*end {
                                dx[i * n + j] += gi / len;
                            }
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                shift,
                normalized,
                inv_std,
            } => {
                let gv = self.value(*gain).data();
                acc.with(*shift, |ds| add_into(ds, g));
                acc.with(*gain, |dg| {
                    for i in 0..g.len() {
                        dg[i] += g[i] * normalized[i];
                    }
                });
                let d = g.len() as f64;
                let dn: Vec<f64> = g.iter().zip(gv).map(|(g, w)| g * w).collect();
                let mean_dn = dn.iter().sum::<f64>() / d;
                let mean_dn_n = dn.iter().zip(normalized).map(|(a, b)| a * b).sum::<f64>() / d;
                acc.with(*x, |dx| {
                    for i in 0..dn.len() {
                        dx[i] += inv_std * (dn[i] - mean_dn - normalized[i] * mean_dn_n);
                    }
                });
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).numel();
                    acc.with(*p, |dp| add_into(dp, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::StackColumns(cols) => {
                let m = cols.len();
                for (j, c) in cols.iter().enumerate() {
                    acc.with(*c, |dc| {
                        for (i, v) in dc.iter_mut().enumerate() {
                            *v += g[i * m + j];
                        }
                    });
                }
            }
            Op::GatherRows { table, indices } => {
                let cols = self.shape(*table)[1];
                acc.with(*table, |dt| {
                    for (r, &i) in indices.iter().enumerate() {
                        add_into(&mut dt[i * cols..(i + 1) * cols], &g[r * cols..(r + 1) * cols]);
                    }
                });
            }
            Op::AddColumn { matrix, column } => {
                let n = self.shape(*matrix)[1];
                acc.with(*matrix, |dm| add_into(dm, g));
                acc.with(*column, |dc| {
                    for (i, v) in dc.iter_mut().enumerate() {
                        *v += g[i * n..(i + 1) * n].iter().sum::<f64>();
                    }
                });
            }
            Op::Sum(a) => acc.with(*a, |da| da.iter_mut().for_each(|d| *d += g[0])),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

struct Accumulator<'g, 'a> {
    nodes: &'g [Node<'a>],
    grads: &'g mut Vec<Option<Vec<f64>>>,
}

impl Accumulator<'_, '_> {
    fn with(&mut self, id: NodeId, f: impl FnOnce(&mut [f64])) {
        let node = &self.nodes[id.0];
        if !node.needs_grad {
            return;
        }
        let slot = &mut self.grads[id.0];
        let buf = slot.get_or_insert_with(|| vec![0.0; node.value.numel()]);
        f(buf);
    }
}

/// Leaf gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of a leaf, or `None` if the loss does not depend on it.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// Gradient of a leaf, zero-filled when the loss does not depend on it.
    pub fn wrt(&self, id: NodeId) -> Tensor {
        match self.get(id) {
            Some(t) => t.clone(),
            None => Tensor::zeros(&self.shapes[id.0]),
        }
    }

    /// Moves the gradient out, zero-filled when absent.
    pub fn take(&mut self, id: NodeId) -> Tensor {
        match self.grads.get_mut(id.0).and_then(Option::take) {
            Some(t) => t,
            None => Tensor::zeros(&self.shapes[id.0]),
        }
    }
}

impl core::fmt::Debug for Gradients {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let present = self.grads.iter().filter(|g| g.is_some()).count();
        f.debug_struct("Gradients").field("leaves_with_gradient", &present).finish()
    }
}
