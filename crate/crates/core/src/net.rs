//! The routed network: stem, `n` gated residual blocks with their routers,
//! and the classifier head.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::blocks::{build_cost_table, BlockKind, BlockParams, BlockShape, BlockVars, CostTable, StemHead, StemHeadVars};
use crate::error::shape_err;
use crate::rng::Rng;
use crate::router::{relax_on_graph, sample_gumbel_pair, GumbelConfig, RouterParams, RouterVars};
use crate::{Error, Graph, Result, Tensor, Var};

/// Architecture of a [`DynamicNet`].
#[derive(Clone, Debug, PartialEq)]
pub struct NetSpec {
    pub kind: BlockKind,
    /// `[channels, height, width]` of the input images.
    pub in_shape: [usize; 3],
    /// Block channels (conv) or width (dense).
    pub channels: usize,
    /// Number of gated blocks `n`.
    pub depth: usize,
    pub num_classes: usize,
    /// 2×2 average-pool stages after the stem (conv only).
    pub pools: usize,
    pub router_hidden: usize,
}

impl NetSpec {
    /// Block geometry shared by every gated block.
    pub fn block_shape(&self) -> BlockShape {
        match self.kind {
            BlockKind::ConvResidual => {
                let f = 1usize << self.pools;
                BlockShape::conv(self.channels, self.in_shape[1] / f, self.in_shape[2] / f)
            }
            BlockKind::DenseResidual => BlockShape::dense(self.channels),
        }
    }

    pub fn cost_table(&self) -> Result<CostTable> {
        build_cost_table(&vec![self.block_shape(); self.depth])
    }
}

/// Binary run/skip decisions, one per gated block.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoutingPath {
    bits: Vec<u8>,
}

impl RoutingPath {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Data(format!("routing path bits must be 0 or 1, got {bits:?}")));
        }
        Ok(RoutingPath { bits })
    }

    pub fn all(n: usize, bit: u8) -> Self {
        RoutingPath { bits: vec![bit.min(1); n] }
    }

    /// The path whose block `k` runs iff bit `k` of `code` is set.
    pub fn from_code(code: u64, n: usize) -> Self {
        RoutingPath { bits: (0..n).map(|k| ((code >> k) & 1) as u8).collect() }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn as_reals(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| f64::from(b)).collect()
    }

    /// `"101101"`, block 1 first.
    pub fn to_bitstring(&self) -> String {
        self.bits.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }

    pub fn parse_bitstring(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::Data(format!("invalid routing path {s:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(RoutingPath { bits })
    }
}

/// Relaxed gate values in `[0, 1]`, one per gated block.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxedPath {
    values: Vec<f64>,
}

impl RelaxedPath {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data(format!("relaxed path values must lie in [0, 1], got {values:?}")));
        }
        Ok(RelaxedPath { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Thresholds at 0.5 (0.5 itself runs).
    pub fn binarize(&self) -> RoutingPath {
        RoutingPath { bits: self.values.iter().map(|&v| u8::from(v >= 0.5)).collect() }
    }
}

/// Elementwise mean of relaxed paths.
pub fn group_center(paths: &[RelaxedPath]) -> Result<Vec<f64>> {
    let first = paths.first().ok_or_else(|| Error::Usage("group_center of an empty group".into()))?;
    let n = first.len();
    let mut c = vec![0.0; n];
    for p in paths {
        if p.len() != n {
            return Err(shape_err!("paths of lengths {} and {n} in one group", p.len()));
        }
        c.iter_mut().zip(p.values()).for_each(|(a, b)| *a += b);
    }
    c.iter_mut().for_each(|a| *a /= paths.len() as f64);
    Ok(c)
}

/// How gate values are obtained in a relaxed forward.
pub enum Gates<'a> {
    /// Fresh Gumbel noise from the given stream (training).
    Gumbel(&'a mut Rng),
    /// Noiseless relaxation `softmax(ln probs / T)[1]`.
    Noiseless,
    /// Routers still run, but the gates take these constant values.
    Forced(&'a [f64]),
}

/// Graph handles of a relaxed forward.
#[derive(Clone, Debug)]
pub struct RelaxedOut {
    pub logits: Var,
    pub gates: Vec<Var>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinaryOutput {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub path: RoutingPath,
    /// Noiseless `probs[1]` of each router, whether or not its block ran.
    pub relaxed: RelaxedPath,
    pub cost_maccs: u64,
    /// Gated blocks actually evaluated.
    pub executed_blocks: usize,
}

#[derive(Clone, Debug)]
pub struct NetVars {
    stem_head: StemHeadVars,
    blocks: Vec<BlockVars>,
    routers: Vec<RouterVars>,
    order: Vec<Var>,
}

impl NetVars {
    /// Handles in the order of [`DynamicNet::tensors_mut`].
    pub fn all(&self) -> &[Var] {
        &self.order
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicNet {
    pub spec: NetSpec,
    pub stem_head: StemHead,
    pub blocks: Vec<BlockParams>,
    pub routers: Vec<RouterParams>,
    pub cost_table: CostTable,
}

/// Which parameters a caller wants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    All,
    Routers,
    Backbone,
}

impl DynamicNet {
    pub fn new(spec: NetSpec, rng: &mut Rng) -> Result<Self> {
        let stem_head = StemHead::init(spec.kind, spec.in_shape, spec.channels, spec.pools, spec.num_classes, rng)?;
        let shape = spec.block_shape();
        if stem_head.block_shape() != shape {
            return Err(shape_err!("stem output {:?} does not match block shape {shape:?}", stem_head.block_shape()));
        }
        let gain = 1.0 / crate::math::sqrt(spec.depth.max(1) as f64);
        let mut blocks = Vec::with_capacity(spec.depth);
        let mut routers = Vec::with_capacity(spec.depth);
        for _ in 0..spec.depth {
            blocks.push(BlockParams::init(shape, gain, rng)?);
            routers.push(RouterParams::init(shape.channels, spec.router_hidden, rng)?);
        }
        let cost_table = spec.cost_table()?;
        Ok(DynamicNet { spec, stem_head, blocks, routers, cost_table })
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.blocks.len();
        if self.routers.len() != n || self.cost_table.len() != n || self.spec.depth != n {
            return Err(shape_err!(
                "{} blocks, {} routers, {} cost entries, depth {}",
                n,
                self.routers.len(),
                self.cost_table.len(),
                self.spec.depth
            ));
        }
        for (b, r) in self.blocks.iter().zip(&self.routers) {
            b.validate()?;
            r.validate()?;
            if b.shape != self.stem_head.block_shape() || r.channels() != b.shape.channels {
                return Err(shape_err!("block/router geometry does not chain"));
            }
        }
        Ok(())
    }

    /// `(name, tensor)` for every parameter, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (name, t) in ["stem.w", "stem.b", "head.w", "head.b"].into_iter().zip(self.stem_head.tensors()) {
            out.push((String::from(name), t));
        }
        for (k, b) in self.blocks.iter().enumerate() {
            for (name, t) in ["w1", "b1", "w2", "b2"].into_iter().zip(b.tensors()) {
                out.push((format!("block{k}.{name}"), t));
            }
        }
        for (k, r) in self.routers.iter().enumerate() {
            for (name, t) in ["w1", "b1", "w2", "b2"].into_iter().zip(r.tensors()) {
                out.push((format!("router{k}.{name}"), t));
            }
        }
        out
    }

    /// Mutable parameters of `group`, in [`DynamicNet::named_tensors`] order.
    pub fn tensors_mut(&mut self, group: ParamGroup) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        if group != ParamGroup::Routers {
            out.extend(self.stem_head.tensors_mut());
            for b in &mut self.blocks {
                out.extend(b.tensors_mut());
            }
        }
        if group != ParamGroup::Backbone {
            for r in &mut self.routers {
                out.extend(r.tensors_mut());
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn bind(&self, g: &mut Graph) -> NetVars {
        let stem_head = self.stem_head.bind(g);
        let blocks: Vec<BlockVars> = self.blocks.iter().map(|b| b.bind(g)).collect();
        let routers: Vec<RouterVars> = self.routers.iter().map(|r| r.bind(g)).collect();
        // Leaves were pushed in named_tensors order, so their indices are consecutive.
        let first = g.len() - self.named_tensors().len();
        let order = (first..g.len()).map(Var::from_index).collect();
        NetVars { stem_head, blocks, routers, order }
    }

    fn input(&self, g: &mut Graph, x: &Tensor) -> Result<Var> {
        if x.shape() != self.spec.in_shape {
            return Err(shape_err!("network expects input {:?}, got {:?}", self.spec.in_shape, x.shape()));
        }
        g.constant(x.shape(), x.data().to_vec())
    }

    /// Relaxed forward: `a_k = v_k·F_k(a_{k−1}) + (1 − v_k)·a_{k−1}` with every
    /// block and router evaluated.
    pub fn forward_relaxed_on(&self, g: &mut Graph, vars: &NetVars, x: &Tensor, cfg: &GumbelConfig, mut gates: Gates<'_>) -> Result<RelaxedOut> {
        if let Gates::Forced(v) = &gates {
            if v.len() != self.depth() {
                return Err(shape_err!("{} forced gates for {} blocks", v.len(), self.depth()));
            }
        }
        let xv = self.input(g, x)?;
        let mut a = self.stem_head.stem(g, &vars.stem_head, xv)?;
        let mut gate_vars = Vec::with_capacity(self.depth());
        for k in 0..self.depth() {
            let r = self.routers[k].forward(g, &vars.routers[k], a)?;
            let v = match &mut gates {
                Gates::Gumbel(rng) => relax_on_graph(g, r.logits, sample_gumbel_pair(rng), cfg)?,
                Gates::Noiseless => relax_on_graph(g, r.logits, [0.0, 0.0], cfg)?,
                Gates::Forced(vals) => g.scalar(vals[k]),
            };
            let f = self.blocks[k].forward(g, &vars.blocks[k], a)?;
            a = g.gate_mix(v, f, a)?;
            gate_vars.push(v);
        }
        let logits = self.stem_head.head(g, &vars.stem_head, a)?;
        Ok(RelaxedOut { logits, gates: gate_vars })
    }

    /// Graph-free convenience wrapper of [`DynamicNet::forward_relaxed_on`].
    pub fn forward_relaxed(&self, x: &Tensor, cfg: &GumbelConfig, gates: Gates<'_>) -> Result<(Vec<f64>, RelaxedPath)> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let out = self.forward_relaxed_on(&mut g, &vars, x, cfg, gates)?;
        let v: Vec<f64> = out.gates.iter().map(|&v| g.item(v)).collect();
        Ok((g.value(out.logits).to_vec(), RelaxedPath::new(v)?))
    }

    /// Hard-gated forward on `g`. Skipped blocks are not evaluated and the
    /// graph never passes through a gate. Decisions come from `path` when
    /// given, otherwise from the noiseless routers (`probs[1] ≥ 0.5` runs);
    /// routers are evaluated outside the graph.
    pub fn forward_hard_on(
        &self,
        g: &mut Graph,
        vars: &NetVars,
        x: &Tensor,
        path: Option<&RoutingPath>,
        mut noise: Option<(&GumbelConfig, &mut Rng)>,
    ) -> Result<(Var, RoutingPath, RelaxedPath, usize)> {
        if let Some(p) = path {
            if p.len() != self.depth() {
                return Err(shape_err!("path of length {} for {} blocks", p.len(), self.depth()));
            }
        }
        let xv = self.input(g, x)?;
        let mut a = self.stem_head.stem(g, &vars.stem_head, xv)?;
        let mut bits = Vec::with_capacity(self.depth());
        let mut soft = Vec::with_capacity(self.depth());
        let mut executed = 0;
        for k in 0..self.depth() {
            let trace = self.routers[k].trace(&g.to_tensor(a))?;
            if !trace.probs.iter().all(|p| p.is_finite()) {
                return Err(Error::Divergence(format!("non-finite activations entering router {k}")));
            }
            let v = match noise.as_mut() {
                Some((cfg, rng)) => crate::router::relax_value(trace.probs, sample_gumbel_pair(rng), cfg.temperature),
                None => trace.probs[1],
            };
            soft.push(v);
            let run = match path {
                Some(p) => p.bits()[k] == 1,
                None => v >= 0.5,
            };
            bits.push(u8::from(run));
            if run {
                a = self.blocks[k].forward(g, &vars.blocks[k], a)?;
                executed += 1;
            }
        }
        let logits = self.stem_head.head(g, &vars.stem_head, a)?;
        Ok((logits, RoutingPath { bits }, RelaxedPath::new(soft)?, executed))
    }

    fn finish_binary(&self, g: &Graph, logits: Var, path: RoutingPath, relaxed: RelaxedPath, executed: usize) -> Result<BinaryOutput> {
        let logits = g.value(logits).to_vec();
        let probs = crate::math::softmax(&logits);
        let cost_maccs = self.cost_table.path_cost(path.bits())?;
        Ok(BinaryOutput { logits, probs, path, relaxed, cost_maccs, executed_blocks: executed })
    }

    /// Deterministic inference: block `k` runs iff its router's
    /// `probs[1] ≥ 0.5`; cost is `Σ c_k·u_k`.
    pub fn forward_binary(&self, x: &Tensor) -> Result<BinaryOutput> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let (logits, path, relaxed, executed) = self.forward_hard_on(&mut g, &vars, x, None, None)?;
        self.finish_binary(&g, logits, path, relaxed, executed)
    }

    /// Inference with Gumbel noise on the decisions (opt-in).
    pub fn forward_binary_noisy(&self, x: &Tensor, cfg: &GumbelConfig, rng: &mut Rng) -> Result<BinaryOutput> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let (logits, path, relaxed, executed) = self.forward_hard_on(&mut g, &vars, x, None, Some((cfg, rng)))?;
        self.finish_binary(&g, logits, path, relaxed, executed)
    }

    /// Inference along a caller-chosen path.
    pub fn forward_path(&self, x: &Tensor, path: &RoutingPath) -> Result<BinaryOutput> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let (logits, path, relaxed, executed) = self.forward_hard_on(&mut g, &vars, x, Some(path), None)?;
        self.finish_binary(&g, logits, path, relaxed, executed)
    }

    /// Replaces every router by an input-independent one that takes the
    /// decision in `path` (large output bias, zero weights).
    pub fn force_routers(&mut self, path: &RoutingPath) -> Result<()> {
        if path.len() != self.depth() {
            return Err(shape_err!("path of length {} for {} blocks", path.len(), self.depth()));
        }
        let (c, d) = (self.spec.block_shape().channels, self.spec.router_hidden);
        for (r, &b) in self.routers.iter_mut().zip(path.bits()) {
            let bias = if b == 1 { [-10.0, 10.0] } else { [10.0, -10.0] };
            *r = RouterParams::constant(c, d, bias);
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for t in self.tensors_mut(ParamGroup::All) {
            t.zero_grad();
        }
    }

    /// Moves gradients of the bound leaves into the parameters' `grad` buffers.
    pub fn accumulate_grads(&mut self, g: &Graph, vars: &NetVars) -> Result<()> {
        let tensors = self.tensors_mut(ParamGroup::All);
        for (t, &v) in tensors.into_iter().zip(vars.all()) {
            if let Some(gr) = g.grad(v) {
                t.accumulate_grad(gr)?;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }
}
