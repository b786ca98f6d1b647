//! Tape-based reverse-mode automatic differentiation.
//!
//! Operations are recorded in execution order, so the tape is already a
//! topological order; [`Graph::backward`] walks it once in reverse.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::shape_err;
use crate::tensor::{numel, Tensor};
use crate::{kernels, math, Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }

    pub(crate) fn from_index(i: usize) -> Self {
        Var(i)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Matmul { a: Var, b: Var, m: usize, k: usize, p: usize },
    Conv3x3 { x: Var, k: Var, ci: usize, co: usize, h: usize, w: usize },
    ChannelBias { x: Var, b: Var, hw: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Relu(Var),
    Square(Var),
    AvgPool2 { x: Var, c: usize, h: usize, w: usize },
    GlobalAvgPool { x: Var, c: usize, hw: usize },
    Reshape(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Select(Var, usize),
    CrossEntropy { logits: Var, label: usize, probs: Vec<f64> },
    GateMix { v: Var, f: Var, a: Var },
    StraightThrough(Var),
    Stack(Vec<Var>),
    Mean(Vec<Var>),
    Norm(Var),
    Sum(Var),
    Dot(Var, Vec<f64>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Vec<f64>,
    shape: Vec<usize>,
    op: Op,
    requires_grad: bool,
    /// Accumulated gradient; only kept for leaves.
    grad: Option<Vec<f64>>,
}

/// Recorded computation. Confined to one thread during forward/backward.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    visits: usize,
}

fn add_into(dst: &mut Option<Vec<f64>>, src: &[f64]) {
    match dst {
        Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src.to_vec()),
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<f64>, shape: Vec<usize>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node { value, shape, op, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf holding a copy of `t`; tracks gradients iff `t.requires_grad`.
    pub fn tensor(&mut self, t: &Tensor) -> Var {
        self.push(t.data().to_vec(), t.shape().to_vec(), Op::Leaf, t.requires_grad)
    }

    pub fn leaf(&mut self, shape: &[usize], data: Vec<f64>, requires_grad: bool) -> Result<Var> {
        if numel(shape) != data.len() {
            return Err(shape_err!("leaf shape {shape:?} holds {} values, got {}", numel(shape), data.len()));
        }
        Ok(self.push(data, shape.to_vec(), Op::Leaf, requires_grad))
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        self.leaf(shape, data, false)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.push(vec![x], Vec::new(), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Nodes processed by the most recent backward pass.
    pub fn last_backward_visits(&self) -> usize {
        self.visits
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v), self.value(v).to_vec()).expect("node shape is consistent")
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err!("{what}: {:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err!("matmul {sa:?} · {sb:?}"));
        }
        let (m, k, p) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * p];
        kernels::matmul(self.value(a), self.value(b), m, k, p, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, vec![m, p], Op::Matmul { a, b, m, k, p }, rg))
    }

    /// 3×3 convolution, zero padding 1, stride 1: `x: [ci,h,w]`, `k: [co,ci,3,3]`.
    pub fn conv3x3(&mut self, x: Var, k: Var) -> Result<Var> {
        let (sx, sk) = (self.shape(x), self.shape(k));
        if sx.len() != 3 || sk.len() != 4 || sk[2] != 3 || sk[3] != 3 {
            return Err(shape_err!("conv3x3 expects [C,H,W] and [Co,Ci,3,3], got {sx:?}, {sk:?}"));
        }
        if sx[0] != sk[1] {
            return Err(shape_err!("conv3x3 channel mismatch: input {} vs kernel {}", sx[0], sk[1]));
        }
        let (ci, h, w, co) = (sx[0], sx[1], sx[2], sk[0]);
        let mut out = vec![0.0; co * h * w];
        kernels::conv3x3(self.value(x), self.value(k), ci, co, h, w, &mut out);
        let rg = self.rg(x) || self.rg(k);
        Ok(self.push(out, vec![co, h, w], Op::Conv3x3 { x, k, ci, co, h, w }, rg))
    }

    /// Adds `b[c]` to every element of channel `c` of `x: [c, ...]`.
    pub fn channel_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let c = *sx.first().ok_or_else(|| shape_err!("channel_bias on a scalar"))?;
        if self.shape(b) != [c] {
            return Err(shape_err!("channel_bias: bias {:?} for input {sx:?}", self.shape(b)));
        }
        let hw = numel(&sx) / c;
        let bv = self.value(b);
        let out: Vec<f64> = self.value(x).iter().enumerate().map(|(i, &v)| v + bv[i / hw]).collect();
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(out, sx, Op::ChannelBias { x, b, hw }, rg))
    }

    fn zip_op(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.same_shape(a, b, what)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let rg = self.rg(a) || self.rg(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(out, shape, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_op(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn map_op(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let rg = self.rg(a);
        let shape = self.shape(a).to_vec();
        self.push(out, shape, op, rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map_op(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.map_op(a, |x| x + c, Op::AddConst(a))
    }

    /// Adds a constant array of the same shape (no gradient into it).
    pub fn add_const(&mut self, a: Var, c: &[f64]) -> Result<Var> {
        if c.len() != self.value(a).len() {
            return Err(shape_err!("add_const: {} values for {:?}", c.len(), self.shape(a)));
        }
        let out = self.value(a).iter().zip(c).map(|(x, y)| x + y).collect();
        let rg = self.rg(a);
        let shape = self.shape(a).to_vec();
        Ok(self.push(out, shape, Op::AddConst(a), rg))
    }

    /// Elementwise `max(0, x)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, a: Var) -> Var {
        self.map_op(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map_op(a, |x| x * x, Op::Square(a))
    }

    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 3 || !s[1].is_multiple_of(2) || !s[2].is_multiple_of(2) {
            return Err(shape_err!("avg_pool2 expects [C,H,W] with even H, W; got {s:?}"));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let mut out = vec![0.0; c * (h / 2) * (w / 2)];
        kernels::avg_pool2(self.value(x), c, h, w, &mut out);
        let rg = self.rg(x);
        Ok(self.push(out, vec![c, h / 2, w / 2], Op::AvgPool2 { x, c, h, w }, rg))
    }

    /// `[C,H,W] → [C]` per-channel mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 3 {
            return Err(shape_err!("global_avg_pool expects [C,H,W], got {s:?}"));
        }
        let (c, hw) = (s[0], s[1] * s[2]);
        let mut out = vec![0.0; c];
        kernels::global_avg_pool(self.value(x), c, hw, &mut out);
        let rg = self.rg(x);
        Ok(self.push(out, vec![c], Op::GlobalAvgPool { x, c, hw }, rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if numel(shape) != self.value(a).len() {
            return Err(shape_err!("reshape {:?} → {shape:?}", self.shape(a)));
        }
        let out = self.value(a).to_vec();
        let rg = self.rg(a);
        Ok(self.push(out, shape.to_vec(), Op::Reshape(a), rg))
    }

    fn vector_len(&self, a: Var, what: &str) -> Result<usize> {
        match self.shape(a) {
            [k] if *k > 0 => Ok(*k),
            s => Err(shape_err!("{what} expects a non-empty vector, got {s:?}")),
        }
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let k = self.vector_len(a, "softmax")?;
        let out = math::softmax(self.value(a));
        let rg = self.rg(a);
        Ok(self.push(out, vec![k], Op::Softmax(a), rg))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let k = self.vector_len(a, "log_softmax")?;
        let lse = math::log_sum_exp(self.value(a));
        let out = self.value(a).iter().map(|&x| x - lse).collect();
        let rg = self.rg(a);
        Ok(self.push(out, vec![k], Op::LogSoftmax(a), rg))
    }

    /// Scalar `a[idx]` of a vector.
    pub fn select(&mut self, a: Var, idx: usize) -> Result<Var> {
        let k = self.vector_len(a, "select")?;
        if idx >= k {
            return Err(shape_err!("select index {idx} out of range {k}"));
        }
        let out = vec![self.value(a)[idx]];
        let rg = self.rg(a);
        Ok(self.push(out, Vec::new(), Op::Select(a, idx), rg))
    }

    /// `-ln softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let k = self.vector_len(logits, "cross_entropy")?;
        if label >= k {
            return Err(Error::Usage(alloc::format!("label {label} out of range for {k} classes")));
        }
        let lse = math::log_sum_exp(self.value(logits));
        let loss = lse - self.value(logits)[label];
        let probs = math::softmax(self.value(logits));
        let rg = self.rg(logits);
        Ok(self.push(vec![loss], Vec::new(), Op::CrossEntropy { logits, label, probs }, rg))
    }

    /// Relaxed gating `v·f + (1−v)·a` with scalar `v`.
    pub fn gate_mix(&mut self, v: Var, f: Var, a: Var) -> Result<Var> {
        if self.value(v).len() != 1 {
            return Err(shape_err!("gate_mix: gate must be a scalar, got {:?}", self.shape(v)));
        }
        self.same_shape(f, a, "gate_mix")?;
        let g = self.item(v);
        let out = self.value(f).iter().zip(self.value(a)).map(|(&fv, &av)| g * fv + (1.0 - g) * av).collect();
        let rg = self.rg(v) || self.rg(f) || self.rg(a);
        let shape = self.shape(a).to_vec();
        Ok(self.push(out, shape, Op::GateMix { v, f, a }, rg))
    }

    /// Forward `1[x ≥ 0.5]`, backward identity.
    pub fn straight_through(&mut self, a: Var) -> Var {
        self.map_op(a, |x| if x >= 0.5 { 1.0 } else { 0.0 }, Op::StraightThrough(a))
    }

    /// Packs scalars into a vector.
    pub fn stack(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::Usage("stack of zero scalars".into()));
        }
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs {
            if self.value(x).len() != 1 {
                return Err(shape_err!("stack expects scalars, got {:?}", self.shape(x)));
            }
            out.push(self.item(x));
        }
        let rg = xs.iter().any(|&x| self.rg(x));
        Ok(self.push(out, vec![xs.len()], Op::Stack(xs.to_vec()), rg))
    }

    /// Elementwise mean of equally shaped nodes.
    pub fn mean(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::Usage("mean of an empty list".into()))?;
        let shape = self.shape(first).to_vec();
        let mut out = vec![0.0; numel(&shape)];
        for &x in xs {
            if self.shape(x) != shape.as_slice() {
                return Err(shape_err!("mean: {:?} vs {shape:?}", self.shape(x)));
            }
            out.iter_mut().zip(self.value(x)).for_each(|(o, v)| *o += v);
        }
        let n = xs.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        let rg = xs.iter().any(|&x| self.rg(x));
        Ok(self.push(out, shape, Op::Mean(xs.to_vec()), rg))
    }

    /// Euclidean norm; the gradient at the origin is taken as 0.
    pub fn norm(&mut self, a: Var) -> Var {
        let out = math::sqrt(self.value(a).iter().map(|x| x * x).sum());
        let rg = self.rg(a);
        self.push(vec![out], Vec::new(), Op::Norm(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().sum();
        let rg = self.rg(a);
        self.push(vec![out], Vec::new(), Op::Sum(a), rg)
    }

    /// Inner product with a constant vector.
    pub fn dot_const(&mut self, a: Var, c: &[f64]) -> Result<Var> {
        if c.len() != self.value(a).len() {
            return Err(shape_err!("dot_const: {} weights for {:?}", c.len(), self.shape(a)));
        }
        let out = self.value(a).iter().zip(c).map(|(x, y)| x * y).sum();
        let rg = self.rg(a);
        Ok(self.push(vec![out], Vec::new(), Op::Dot(a, c.to_vec()), rg))
    }

    /// Accumulates `d loss / d leaf` into every gradient-tracking leaf.
    /// Repeated calls add up; use [`Graph::zero_grad`] to reset.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(alloc::format!("backward needs a scalar loss, got shape {:?}", self.shape(loss))));
        }
        let n = loss.0 + 1;
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; n];
        adj[loss.0] = Some(vec![1.0]);
        self.visits = 0;
        for i in (0..n).rev() {
            self.visits += 1;
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                add_into(&mut self.nodes[i].grad, &g);
            } else {
                self.propagate(i, &g, &mut adj);
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let needs = |v: Var| nodes[v.0].requires_grad;
        let val = |v: Var| nodes[v.0].value.as_slice();
        let zeros = |v: Var| vec![0.0; nodes[v.0].value.len()];
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Matmul { a, b, m, k, p } => {
                let (a, b) = (*a, *b);
                let mut ga = needs(a).then(|| zeros(a));
                let mut gb = needs(b).then(|| zeros(b));
                kernels::matmul_backward(val(a), val(b), g, *m, *k, *p, ga.as_deref_mut(), gb.as_deref_mut());
                if let Some(ga) = ga {
                    add_into(&mut adj[a.0], &ga);
                }
                if let Some(gb) = gb {
                    add_into(&mut adj[b.0], &gb);
                }
            }
            Op::Conv3x3 { x, k, ci, co, h, w } => {
                let (x, k) = (*x, *k);
                let mut gx = needs(x).then(|| zeros(x));
                let mut gk = needs(k).then(|| zeros(k));
                kernels::conv3x3_backward(val(x), val(k), g, *ci, *co, *h, *w, gx.as_deref_mut(), gk.as_deref_mut());
                if let Some(gx) = gx {
                    add_into(&mut adj[x.0], &gx);
                }
                if let Some(gk) = gk {
                    add_into(&mut adj[k.0], &gk);
                }
            }
            Op::ChannelBias { x, b, hw } => {
                if needs(*x) {
                    add_into(&mut adj[x.0], g);
                }
                if needs(*b) {
                    let gb: Vec<f64> = g.chunks(*hw).map(|c| c.iter().sum()).collect();
                    add_into(&mut adj[b.0], &gb);
                }
            }
            Op::Add(a, b) => {
                if needs(*a) {
                    add_into(&mut adj[a.0], g);
                }
                if needs(*b) {
                    add_into(&mut adj[b.0], g);
                }
            }
            Op::Sub(a, b) => {
                if needs(*a) {
                    add_into(&mut adj[a.0], g);
                }
                if needs(*b) {
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    add_into(&mut adj[b.0], &neg);
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    let ga: Vec<f64> = g.iter().zip(val(*b)).map(|(x, y)| x * y).collect();
                    add_into(&mut adj[a.0], &ga);
                }
                if needs(*b) {
                    let gb: Vec<f64> = g.iter().zip(val(*a)).map(|(x, y)| x * y).collect();
                    add_into(&mut adj[b.0], &gb);
                }
            }
            Op::Scale(a, s) => {
                let ga: Vec<f64> = g.iter().map(|x| x * s).collect();
                add_into(&mut adj[a.0], &ga);
            }
            Op::AddConst(a) | Op::Reshape(a) | Op::StraightThrough(a) => {
                add_into(&mut adj[a.0], g);
            }
            Op::Relu(a) => {
                let ga: Vec<f64> = g.iter().zip(val(*a)).map(|(&x, &v)| if v > 0.0 { x } else { 0.0 }).collect();
                add_into(&mut adj[a.0], &ga);
            }
            Op::Square(a) => {
                let ga: Vec<f64> = g.iter().zip(val(*a)).map(|(x, v)| 2.0 * v * x).collect();
                add_into(&mut adj[a.0], &ga);
            }
            Op::AvgPool2 { x, c, h, w } => {
                let mut gx = zeros(*x);
                kernels::avg_pool2_backward(g, *c, *h, *w, &mut gx);
                add_into(&mut adj[x.0], &gx);
            }
            Op::GlobalAvgPool { x, c, hw } => {
                let mut gx = Vec::with_capacity(c * hw);
                for &gc in g.iter() {
                    gx.extend(std::iter::repeat_n(gc / *hw as f64, *hw));
                }
                add_into(&mut adj[x.0], &gx);
            }
            Op::Softmax(a) => {
                let y = &nodes[i].value;
                let dot: f64 = g.iter().zip(y).map(|(x, y)| x * y).sum();
                let ga: Vec<f64> = y.iter().zip(g).map(|(y, x)| y * (x - dot)).collect();
                add_into(&mut adj[a.0], &ga);
            }
            Op::LogSoftmax(a) => {
                let sg: f64 = g.iter().sum();
                let ga: Vec<f64> = nodes[i].value.iter().zip(g).map(|(ly, x)| x - math::exp(*ly) * sg).collect();
                add_into(&mut adj[a.0], &ga);
            }
            Op::Select(a, idx) => {
                let mut ga = zeros(*a);
                ga[*idx] = g[0];
                add_into(&mut adj[a.0], &ga);
            }
            Op::CrossEntropy { logits, label, probs } => {
                let mut gl: Vec<f64> = probs.iter().map(|p| p * g[0]).collect();
                gl[*label] -= g[0];
                add_into(&mut adj[logits.0], &gl);
            }
            Op::GateMix { v, f, a } => {
                let (v, f, a) = (*v, *f, *a);
                let gate = nodes[v.0].value[0];
                if needs(v) {
                    let gv: f64 = g.iter().zip(val(f)).zip(val(a)).map(|((x, fv), av)| x * (fv - av)).sum();
                    add_into(&mut adj[v.0], &[gv]);
                }
                if needs(f) {
                    let gf: Vec<f64> = g.iter().map(|x| x * gate).collect();
                    add_into(&mut adj[f.0], &gf);
                }
                if needs(a) {
                    let ga: Vec<f64> = g.iter().map(|x| x * (1.0 - gate)).collect();
                    add_into(&mut adj[a.0], &ga);
                }
            }
            Op::Stack(xs) => {
                for (x, gv) in xs.iter().zip(g) {
                    if needs(*x) {
                        add_into(&mut adj[x.0], &[*gv]);
                    }
                }
            }
            Op::Mean(xs) => {
                let inv = 1.0 / xs.len() as f64;
                let gm: Vec<f64> = g.iter().map(|x| x * inv).collect();
                for x in xs {
                    if needs(*x) {
                        add_into(&mut adj[x.0], &gm);
                    }
                }
            }
            Op::Norm(a) => {
                let nv = nodes[i].value[0];
                let ga: Vec<f64> = if nv > 0.0 { val(*a).iter().map(|x| g[0] * x / nv).collect() } else { zeros(*a) };
                add_into(&mut adj[a.0], &ga);
            }
            Op::Sum(a) => {
                let ga = vec![g[0]; val(*a).len()];
                add_into(&mut adj[a.0], &ga);
            }
            Op::Dot(a, c) => {
                let ga: Vec<f64> = c.iter().map(|x| x * g[0]).collect();
                add_into(&mut adj[a.0], &ga);
            }
        }
    }
}
