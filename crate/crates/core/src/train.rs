//! Two-stage training.
//!
//! Stage 1 optimizes every parameter end to end on the relaxed network with
//! Gumbel noise and the full objective. Stage 2 freezes the routers and
//! finetunes stem, blocks and head under deterministic hard gating with the
//! classification loss only.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{expand_groups, AugmentConfig, BatchSpec, Normalization, Sample};
use crate::losses::{consistency_on, cost_on, diversity_on, LossBreakdown, RegularizerConfig};
use crate::net::{DynamicNet, Gates, NetSpec, ParamGroup, RoutingPath};
use crate::optim::SgdState;
use crate::rng::{stream, Rng};
use crate::router::GumbelConfig;
use crate::{Error, Graph, Result, Var};

/// Scale of the cost table entering the cost loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostUnit {
    /// `c_k / Σ c`: the loss is the expected fraction of full compute.
    Relative,
    /// `c_k / 1e9`.
    Gmacc,
}

impl CostUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            CostUnit::Relative => "relative",
            CostUnit::Gmacc => "gmacc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relative" => Some(CostUnit::Relative),
            "gmacc" => Some(CostUnit::Gmacc),
            _ => None,
        }
    }
}

/// Storage precision of parameters between optimizer steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F64,
    /// Parameters are rounded to `f32` after every step; arithmetic stays in `f64`.
    F32,
}

impl Precision {
    pub fn as_str(self) -> &'static str {
        match self {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "f64" => Some(Precision::F64),
            "f32" => Some(Precision::F32),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs_stage1: usize,
    pub epochs_stage2: usize,
    pub lr: f64,
    /// Epochs at which the rate is multiplied by `lr_decay`.
    pub milestones: Vec<usize>,
    pub lr_decay: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch: BatchSpec,
    pub loss: RegularizerConfig,
    pub gumbel: GumbelConfig,
    pub augment: AugmentConfig,
    pub normalization: Normalization,
    pub cost_unit: CostUnit,
    pub precision: Precision,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Usage(format!("train.lr must be positive, got {}", self.lr)));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Usage(format!("train.milestones must be strictly increasing, got {:?}", self.milestones)));
        }
        if !(self.lr_decay > 0.0) {
            return Err(Error::Usage("train.lr_decay must be positive".into()));
        }
        SgdState::new(self.lr, self.momentum, self.weight_decay)?;
        self.batch.validate()?;
        self.loss.validate()?;
        self.gumbel.validate()?;
        self.normalization.validate()
    }
}

/// Learning rate at `epoch`: `lr · decay^(number of milestones ≤ epoch)`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let k = cfg.milestones.iter().filter(|&&m| m <= epoch).count();
    cfg.lr * crate::math::powi(cfg.lr_decay, k as i32)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpochRecord {
    /// 1 for relaxed end-to-end training, 2 for router-frozen finetuning.
    pub stage: u8,
    /// Epoch counter, continuing across stages.
    pub epoch: usize,
    pub lr: f64,
    /// Means over the epoch's iterations (centers left empty).
    pub loss: LossBreakdown,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    /// Mean relaxed gate value per block over training items.
    pub mean_gates: Vec<f64>,
    /// Mean hard-gated cost on the validation split.
    pub val_cost_gmacc: f64,
    pub val_unique_paths: usize,
    /// Filled by observers that have a clock; not part of the deterministic record.
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

/// Receives each finished epoch together with the network after it.
pub trait Observer {
    fn on_epoch(&mut self, record: &mut EpochRecord, net: &DynamicNet) -> Result<()>;
}

impl Observer for () {
    fn on_epoch(&mut self, _: &mut EpochRecord, _: &DynamicNet) -> Result<()> {
        Ok(())
    }
}

pub struct TrainData<'a> {
    pub train: &'a [Sample],
    pub val: &'a [Sample],
}

/// Hard-gated evaluation over a split.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalSummary {
    pub accuracy: f64,
    pub mean_cost_maccs: f64,
    pub unique_paths: usize,
    pub samples: usize,
}

pub fn initial_net(spec: NetSpec, seed: u64) -> Result<DynamicNet> {
    DynamicNet::new(spec, &mut Rng::new(seed, stream::INIT))
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Binary-gated evaluation with the routers' own decisions.
pub fn evaluate(net: &DynamicNet, samples: &[Sample], norm: &Normalization) -> Result<EvalSummary> {
    evaluate_gated(net, samples, norm, None)
}

/// Evaluation along `path` for every sample, or with router decisions when `None`.
pub fn evaluate_gated(net: &DynamicNet, samples: &[Sample], norm: &Normalization, path: Option<&RoutingPath>) -> Result<EvalSummary> {
    let mut correct = 0usize;
    let mut cost = 0.0;
    let mut paths = BTreeSet::new();
    for s in samples {
        let x = norm.apply(&s.image)?;
        let out = match path {
            Some(p) => net.forward_path(&x, p)?,
            None => net.forward_binary(&x)?,
        };
        correct += usize::from(argmax(&out.logits) == s.label);
        cost += out.cost_maccs as f64;
        paths.insert(out.path);
    }
    let n = samples.len().max(1) as f64;
    Ok(EvalSummary { accuracy: correct as f64 / n, mean_cost_maccs: cost / n, unique_paths: paths.len(), samples: samples.len() })
}

fn cost_weights(net: &DynamicNet, unit: CostUnit) -> Vec<f64> {
    match unit {
        CostUnit::Gmacc => net.cost_table.gmaccs(),
        CostUnit::Relative => {
            let total = net.cost_table.total().max(1) as f64;
            net.cost_table.entries().iter().map(|&c| c as f64 / total).collect()
        }
    }
}

fn round_to_f32(net: &mut DynamicNet) {
    for t in net.tensors_mut(ParamGroup::All) {
        t.data_mut().iter_mut().for_each(|x| *x = *x as f32 as f64);
    }
}

fn check_finite(b: &LossBreakdown) -> Result<()> {
    for (name, v) in [("cls", b.cls), ("con", b.con), ("div", b.div), ("cost", b.cost), ("total", b.total)] {
        if !v.is_finite() {
            return Err(Error::Divergence(format!("loss component {name} is {v}")));
        }
    }
    Ok(())
}

/// Source indices of every iteration of `epoch`: a seeded permutation cut
/// into chunks of `L` (a trailing partial chunk is dropped).
fn epoch_batches(n: usize, l: usize, epoch: usize, root: &Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    root.derive(stream::SHUFFLE, epoch as u64).shuffle(&mut idx);
    idx.chunks_exact(l).map(<[usize]>::to_vec).collect()
}

struct EpochAccum {
    loss: LossBreakdown,
    iters: usize,
    correct: usize,
    items: usize,
    gates: Vec<f64>,
}

impl EpochAccum {
    fn new(n: usize) -> Self {
        EpochAccum { loss: LossBreakdown::default(), iters: 0, correct: 0, items: 0, gates: vec![0.0; n] }
    }

    fn add_loss(&mut self, b: &LossBreakdown) {
        self.loss.cls += b.cls;
        self.loss.con += b.con;
        self.loss.div += b.div;
        self.loss.cost += b.cost;
        self.loss.total += b.total;
        self.iters += 1;
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        self,
        stage: u8,
        epoch: usize,
        lr: f64,
        net: &DynamicNet,
        data: &TrainData<'_>,
        norm: &Normalization,
        fixed: Option<&RoutingPath>,
    ) -> Result<EpochRecord> {
        let it = self.iters.max(1) as f64;
        let items = self.items.max(1) as f64;
        let val = evaluate_gated(net, data.val, norm, fixed)?;
        Ok(EpochRecord {
            stage,
            epoch,
            lr,
            loss: LossBreakdown {
                cls: self.loss.cls / it,
                con: self.loss.con / it,
                div: self.loss.div / it,
                cost: self.loss.cost / it,
                total: self.loss.total / it,
                centers: Vec::new(),
            },
            train_accuracy: self.correct as f64 / items,
            val_accuracy: val.accuracy,
            mean_gates: self.gates.iter().map(|g| g / items).collect(),
            val_cost_gmacc: val.mean_cost_maccs / 1e9,
            val_unique_paths: val.unique_paths,
            wall_seconds: 0.0,
        })
    }
}

/// Per-item `(logits, relaxed path)` values of a relaxed forward.
pub type ItemOutputs = Vec<(Vec<f64>, Vec<f64>)>;

/// One relaxed iteration: forward, objective, backward. Returns the loss
/// breakdown; gradients are left in the graph.
pub fn relaxed_objective(
    net: &DynamicNet,
    g: &mut Graph,
    vars: &crate::net::NetVars,
    batch: &crate::data::GroupedBatch,
    cfg: &TrainConfig,
    gumbel: &Rng,
) -> Result<(Var, LossBreakdown, ItemOutputs)> {
    let costs = cost_weights(net, cfg.cost_unit);
    let m = batch.augmentations;
    let mut paths = Vec::with_capacity(batch.items.len());
    let mut ces = Vec::with_capacity(batch.items.len());
    let mut outs = Vec::with_capacity(batch.items.len());
    for (i, s) in batch.items.iter().enumerate() {
        let x = cfg.normalization.apply(&s.image)?;
        let mut r = gumbel.derive(stream::GUMBEL, i as u64);
        let out = net.forward_relaxed_on(g, vars, &x, &cfg.gumbel, Gates::Gumbel(&mut r))?;
        ces.push(g.cross_entropy(out.logits, s.label)?);
        let p = g.stack(&out.gates)?;
        outs.push((g.value(out.logits).to_vec(), g.value(p).to_vec()));
        paths.push(p);
    }
    let cls = g.mean(&ces)?;
    let groups: Vec<Vec<Var>> = paths.chunks(m).map(<[Var]>::to_vec).collect();
    let (con, centers) = consistency_on(g, &groups, cfg.loss.margin_consistency)?;
    let div = diversity_on(g, &centers, cfg.loss.margin_diversity)?;
    let cost = cost_on(g, &paths, &costs)?;
    let mut total = cls;
    for (term, w) in [(con, cfg.loss.alpha), (div, cfg.loss.beta), (cost, cfg.loss.gamma)] {
        if w != 0.0 {
            let t = g.scale(term, w);
            total = g.add(total, t)?;
        }
    }
    let breakdown = LossBreakdown {
        cls: g.item(cls),
        con: g.item(con),
        div: g.item(div),
        cost: g.item(cost),
        total: g.item(total),
        centers: centers.iter().map(|&c| g.value(c).to_vec()).collect(),
    };
    Ok((total, breakdown, outs))
}

/// Stage 1: end-to-end relaxed training of all parameters under
/// `cls + α·con + β·div + γ·cost`.
pub fn train_stage1(net: &mut DynamicNet, data: &TrainData<'_>, cfg: &TrainConfig, observer: &mut dyn Observer) -> Result<TrainReport> {
    cfg.validate()?;
    let mut report = TrainReport::default();
    if cfg.epochs_stage1 == 0 {
        return Ok(report);
    }
    if data.train.len() < cfg.batch.groups {
        return Err(Error::Usage(format!("{} training samples cannot fill {} groups", data.train.len(), cfg.batch.groups)));
    }
    let root = Rng::new(cfg.seed, 0);
    let mut opt = SgdState::new(cfg.lr, cfg.momentum, cfg.weight_decay)?;
    let mut step = 0u64;
    for epoch in 0..cfg.epochs_stage1 {
        opt.lr = lr_at(epoch, cfg);
        let mut acc = EpochAccum::new(net.depth());
        for sources in epoch_batches(data.train.len(), cfg.batch.groups, epoch, &root) {
            let picked: Vec<&Sample> = sources.iter().map(|&i| &data.train[i]).collect();
            let batch = expand_groups(&picked, cfg.batch.augmentations, &cfg.augment, &root.derive(stream::BATCH, step))?;
            let mut g = Graph::new();
            let vars = net.bind(&mut g);
            let (total, breakdown, outs) = relaxed_objective(net, &mut g, &vars, &batch, cfg, &root.derive(stream::GUMBEL, step))?;
            check_finite(&breakdown)?;
            g.backward(total)?;
            net.zero_grad();
            net.accumulate_grads(&g, &vars)?;
            opt.step(&mut net.tensors_mut(ParamGroup::All))?;
            if cfg.precision == Precision::F32 {
                round_to_f32(net);
            }
            if !net.is_finite() {
                return Err(Error::Divergence(format!("non-finite parameters after step {step}")));
            }
            acc.add_loss(&breakdown);
            for ((logits, gates), s) in outs.iter().zip(&batch.items) {
                acc.correct += usize::from(argmax(logits) == s.label);
                acc.items += 1;
                acc.gates.iter_mut().zip(gates).for_each(|(a, b)| *a += b);
            }
            step += 1;
        }
        let mut rec = acc.finish(1, epoch, opt.lr, net, data, &cfg.normalization, None)?;
        observer.on_epoch(&mut rec, net)?;
        report.epochs.push(rec);
    }
    net.zero_grad();
    Ok(report)
}

/// How hard gates are chosen during hard-gated training.
#[derive(Clone, Debug, PartialEq)]
pub enum HardGating {
    /// Noiseless router decisions (routers frozen).
    Routers,
    /// The same path for every sample, e.g. all ones for a static backbone.
    Fixed(RoutingPath),
}

/// Trains stem, blocks and head with the classification loss under hard
/// gating for `epochs` epochs, numbering them from `first_epoch`. Router
/// parameters are never touched.
pub fn train_hard(
    net: &mut DynamicNet,
    data: &TrainData<'_>,
    cfg: &TrainConfig,
    gating: &HardGating,
    epochs: usize,
    first_epoch: usize,
    observer: &mut dyn Observer,
) -> Result<TrainReport> {
    cfg.validate()?;
    let mut report = TrainReport::default();
    if epochs == 0 {
        return Ok(report);
    }
    if data.train.len() < cfg.batch.groups {
        return Err(Error::Usage(format!("{} training samples cannot fill {} groups", data.train.len(), cfg.batch.groups)));
    }
    // Offset keeps stage-2 streams disjoint from stage 1.
    let root = Rng::new(cfg.seed, 0).derive(stream::SHUFFLE, u64::MAX);
    let mut opt = SgdState::new(cfg.lr, cfg.momentum, cfg.weight_decay)?;
    let mut step = 0u64;
    for e in 0..epochs {
        let epoch = first_epoch + e;
        opt.lr = lr_at(epoch, cfg);
        let mut acc = EpochAccum::new(net.depth());
        for sources in epoch_batches(data.train.len(), cfg.batch.groups, epoch, &root) {
            let picked: Vec<&Sample> = sources.iter().map(|&i| &data.train[i]).collect();
            let batch = expand_groups(&picked, cfg.batch.augmentations, &cfg.augment, &root.derive(stream::BATCH, step))?;
            let mut g = Graph::new();
            let vars = net.bind(&mut g);
            let mut ces = Vec::with_capacity(batch.items.len());
            for s in &batch.items {
                let x = cfg.normalization.apply(&s.image)?;
                let fixed = match gating {
                    HardGating::Routers => None,
                    HardGating::Fixed(p) => Some(p),
                };
                let (logits, path, _, _) = net.forward_hard_on(&mut g, &vars, &x, fixed, None)?;
                acc.correct += usize::from(argmax(g.value(logits)) == s.label);
                acc.items += 1;
                acc.gates.iter_mut().zip(path.bits()).for_each(|(a, &b)| *a += f64::from(b));
                ces.push(g.cross_entropy(logits, s.label)?);
            }
            let cls = g.mean(&ces)?;
            let breakdown = LossBreakdown { cls: g.item(cls), total: g.item(cls), ..LossBreakdown::default() };
            check_finite(&breakdown)?;
            g.backward(cls)?;
            net.zero_grad();
            net.accumulate_grads(&g, &vars)?;
            opt.step(&mut net.tensors_mut(ParamGroup::Backbone))?;
            if cfg.precision == Precision::F32 {
                round_to_f32(net);
            }
            if !net.is_finite() {
                return Err(Error::Divergence(format!("non-finite parameters after finetuning step {step}")));
            }
            acc.add_loss(&breakdown);
            step += 1;
        }
        let fixed = match gating {
            HardGating::Routers => None,
            HardGating::Fixed(p) => Some(p),
        };
        let mut rec = acc.finish(2, epoch, opt.lr, net, data, &cfg.normalization, fixed)?;
        observer.on_epoch(&mut rec, net)?;
        report.epochs.push(rec);
    }
    net.zero_grad();
    Ok(report)
}

/// Stage 2: router-frozen finetuning under the deployed hard gating.
pub fn finetune_stage2(net: &mut DynamicNet, data: &TrainData<'_>, cfg: &TrainConfig, observer: &mut dyn Observer) -> Result<TrainReport> {
    train_hard(net, data, cfg, &HardGating::Routers, cfg.epochs_stage2, cfg.epochs_stage1, observer)
}

/// Both stages back to back.
pub fn train_two_stage(net: &mut DynamicNet, data: &TrainData<'_>, cfg: &TrainConfig, observer: &mut dyn Observer) -> Result<TrainReport> {
    let mut report = train_stage1(net, data, cfg, observer)?;
    report.epochs.extend(finetune_stage2(net, data, cfg, observer)?.epochs);
    Ok(report)
}
