//! Per-block routers: global average pool → FC → ReLU → FC → two logits
//! (skip, run), relaxed with Gumbel-Softmax during training.

use alloc::vec::Vec;

use crate::error::shape_err;
use crate::rng::Rng;
use crate::{math, Error, Graph, Result, Tensor, Var};

pub const DEFAULT_HIDDEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GumbelVariant {
    /// The relaxed value is used as the gate; gradients flow through the softmax.
    Reparameterized,
    /// Forward uses `1[v ≥ 0.5]`, backward uses the relaxed gradient.
    StraightThrough,
}

impl GumbelVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            GumbelVariant::Reparameterized => "reparameterized",
            GumbelVariant::StraightThrough => "straight-through",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "reparameterized" => Some(GumbelVariant::Reparameterized),
            "straight-through" => Some(GumbelVariant::StraightThrough),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GumbelConfig {
    pub temperature: f64,
    pub variant: GumbelVariant,
    /// Draw Gumbel noise outside of training as well.
    pub inference_noise: bool,
}

impl Default for GumbelConfig {
    fn default() -> Self {
        GumbelConfig { temperature: 1.0, variant: GumbelVariant::Reparameterized, inference_noise: false }
    }
}

impl GumbelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Usage(alloc::format!("gumbel temperature must be positive, got {}", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RouterParams {
    /// `[d, C]`
    pub w1: Tensor,
    pub b1: Tensor,
    /// `[2, d]`
    pub w2: Tensor,
    pub b2: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct RouterVars {
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
}

/// Intermediate values of one routing decision.
#[derive(Clone, Debug, PartialEq)]
pub struct RouterTrace {
    pub z: Vec<f64>,
    pub logits: [f64; 2],
    pub probs: [f64; 2],
    pub v: f64,
    pub u: u8,
    pub noise: [f64; 2],
}

/// Graph handles produced by [`RouterParams::forward`].
#[derive(Clone, Copy, Debug)]
pub struct RouterOut {
    pub z: Var,
    pub logits: Var,
    pub probs: Var,
}

impl RouterParams {
    pub fn init(channels: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        if channels == 0 || hidden == 0 {
            return Err(shape_err!("router needs positive extents, got C={channels}, d={hidden}"));
        }
        Ok(RouterParams {
            w1: Tensor::he_normal(&[hidden, channels], channels, rng).with_grad(),
            b1: Tensor::zeros(&[hidden]).with_grad(),
            w2: Tensor::he_normal(&[2, hidden], hidden, rng).with_grad(),
            b2: Tensor::zeros(&[2]).with_grad(),
        })
    }

    /// Zero weights with the given output bias; the decision ignores the input.
    pub fn constant(channels: usize, hidden: usize, bias: [f64; 2]) -> Self {
        RouterParams {
            w1: Tensor::zeros(&[hidden, channels]).with_grad(),
            b1: Tensor::zeros(&[hidden]).with_grad(),
            w2: Tensor::zeros(&[2, hidden]).with_grad(),
            b2: Tensor::new(&[2], bias.to_vec()).expect("two logits").with_grad(),
        }
    }

    pub fn channels(&self) -> usize {
        self.w1.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn validate(&self) -> Result<()> {
        let (d, c) = (self.hidden(), self.channels());
        if self.w1.shape().len() != 2 || self.b1.shape() != [d] || self.w2.shape() != [2, d] || self.b2.shape() != [2] {
            return Err(shape_err!(
                "router tensors {:?} {:?} {:?} {:?} do not form a C={c}, d={d} router",
                self.w1.shape(),
                self.b1.shape(),
                self.w2.shape(),
                self.b2.shape()
            ));
        }
        Ok(())
    }

    pub fn tensors(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Multiply-accumulates of one decision on an `[C, H, W]` input
    /// (pooling sums plus both FC layers).
    pub fn macc(&self, height: usize, width: usize) -> u64 {
        let (c, d) = (self.channels() as u64, self.hidden() as u64);
        c * (height * width) as u64 + d * c + 2 * d
    }

    pub fn bind(&self, g: &mut Graph) -> RouterVars {
        RouterVars { w1: g.tensor(&self.w1), b1: g.tensor(&self.b1), w2: g.tensor(&self.w2), b2: g.tensor(&self.b2) }
    }

    /// `z = gap(a)`, `logits = W2·relu(W1·z + b1) + b2`, `probs = softmax(logits)`.
    pub fn forward(&self, g: &mut Graph, vars: &RouterVars, a: Var) -> Result<RouterOut> {
        let s = g.shape(a);
        if s.len() != 3 || s[0] != self.channels() {
            return Err(shape_err!("router for {} channels got input {s:?}", self.channels()));
        }
        let (c, d) = (self.channels(), self.hidden());
        let z = g.global_avg_pool(a)?;
        let zc = g.reshape(z, &[c, 1])?;
        let h = g.matmul(vars.w1, zc)?;
        let h = g.reshape(h, &[d])?;
        let h = g.channel_bias(h, vars.b1)?;
        let h = g.relu(h);
        let h = g.reshape(h, &[d, 1])?;
        let l = g.matmul(vars.w2, h)?;
        let l = g.reshape(l, &[2])?;
        let logits = g.channel_bias(l, vars.b2)?;
        let probs = g.softmax(logits)?;
        Ok(RouterOut { z, logits, probs })
    }

    /// Graph-free evaluation returning a trace with `v = probs[1]` and the
    /// argmax decision.
    pub fn trace(&self, a: &Tensor) -> Result<RouterTrace> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g);
        let x = g.tensor(a);
        let out = self.forward(&mut g, &vars, x)?;
        let logits = [g.value(out.logits)[0], g.value(out.logits)[1]];
        let probs = [g.value(out.probs)[0], g.value(out.probs)[1]];
        Ok(RouterTrace { z: g.value(out.z).to_vec(), logits, probs, v: probs[1], u: hard_decision(logits), noise: [0.0; 2] })
    }
}

/// Argmax over `(skip, run)` logits; exact ties run the block.
pub fn hard_decision(logits: [f64; 2]) -> u8 {
    u8::from(logits[1] >= logits[0])
}

/// Two independent standard Gumbel draws.
pub fn sample_gumbel_pair(rng: &mut Rng) -> [f64; 2] {
    [rng.gumbel(), rng.gumbel()]
}

/// Records `v = softmax((ln probs + noise) / T)[1]` on the graph; with the
/// straight-through variant the forward value is `1[v ≥ 0.5]`.
pub fn relax_on_graph(g: &mut Graph, logits: Var, noise: [f64; 2], cfg: &GumbelConfig) -> Result<Var> {
    let lp = g.log_softmax(logits)?;
    let noisy = g.add_const(lp, &noise)?;
    let scaled = g.scale(noisy, 1.0 / cfg.temperature);
    let s = g.softmax(scaled)?;
    let v = g.select(s, 1)?;
    Ok(match cfg.variant {
        GumbelVariant::Reparameterized => v,
        GumbelVariant::StraightThrough => g.straight_through(v),
    })
}

/// Closed-form relaxed decision for a trace and fixed noise.
pub fn relax_value(probs: [f64; 2], noise: [f64; 2], temperature: f64) -> f64 {
    let y = [(math::ln(probs[0]) + noise[0]) / temperature, (math::ln(probs[1]) + noise[1]) / temperature];
    math::softmax(&y)[1]
}

/// Fills `trace.noise`, `trace.v` and `trace.u` for one relaxed draw. When
/// noise is disabled the draw is skipped and `v = softmax(ln probs / T)[1]`.
pub fn gumbel_relax(trace: &mut RouterTrace, cfg: &GumbelConfig, rng: Option<&mut Rng>) -> Result<f64> {
    cfg.validate()?;
    let noise = match rng {
        Some(r) => sample_gumbel_pair(r),
        None => [0.0, 0.0],
    };
    let v = relax_value(trace.probs, noise, cfg.temperature);
    trace.noise = noise;
    trace.v = match cfg.variant {
        GumbelVariant::Reparameterized => v,
        GumbelVariant::StraightThrough => f64::from(u8::from(v >= 0.5)),
    };
    trace.u = u8::from(v >= 0.5);
    Ok(trace.v)
}

/// Router multiply-accumulates as a fraction of the block they gate.
pub fn relative_macc(router: &RouterParams, block_macc: u64, height: usize, width: usize) -> f64 {
    router.macc(height, width) as f64 / block_macc as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_diff_check;

    fn input(c: usize, h: usize, w: usize, seed: u64) -> Tensor {
        let mut r = Rng::new(seed, 0);
        Tensor::new(&[c, h, w], (0..c * h * w).map(|_| r.normal()).collect()).unwrap()
    }

    #[test]
    fn zero_router_is_undecided() {
        let r = RouterParams::constant(3, 4, [0.0, 0.0]);
        let t = r.trace(&input(3, 2, 2, 1)).unwrap();
        assert_eq!(t.logits, [0.0, 0.0]);
        assert_eq!(t.probs, [0.5, 0.5]);
        assert_eq!(t.u, 1);
    }

    #[test]
    fn bias_only_router() {
        let r = RouterParams::constant(3, 4, [0.0, 10.0]);
        let t = r.trace(&input(3, 2, 2, 2)).unwrap();
        // softmax of (0, 10): p0 = 1 / (1 + e^10)
        let p0 = 1.0 / (1.0 + math::exp(10.0));
        assert!((t.probs[0] - p0).abs() < 1e-15);
        assert!((t.probs[0] - 4.539786870e-5).abs() < 1e-13);
        assert!((t.probs[1] - (1.0 - p0)).abs() < 1e-15);
    }

    #[test]
    fn rejects_channel_mismatch() {
        let r = RouterParams::init(4, 8, &mut Rng::new(0, 1)).unwrap();
        assert!(r.trace(&input(3, 2, 2, 3)).is_err());
    }

    #[test]
    fn logits_gradient_matches_finite_differences() {
        let r = RouterParams::init(3, 5, &mut Rng::new(4, 1)).unwrap();
        let mut params = [input(3, 3, 3, 5).with_grad(), r.w1.clone(), r.b1.clone(), r.w2.clone(), r.b2.clone()];
        let err = finite_diff_check(&mut params, |g, v| {
            let vars = RouterVars { w1: v[1], b1: v[2], w2: v[3], b2: v[4] };
            let out = r.forward(g, &vars, v[0])?;
            Ok(g.sum(out.logits))
        });
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn fixed_noise_relaxation() {
        let mut t = RouterParams::constant(1, 1, [0.0, 0.0]).trace(&Tensor::zeros(&[1, 1, 1])).unwrap();
        let cfg = GumbelConfig::default();
        assert_eq!(gumbel_relax(&mut t, &cfg, None).unwrap(), 0.5);
        t.probs = [0.25, 0.75];
        let v = gumbel_relax(&mut t, &cfg, None).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
    }

    #[test]
    fn graph_relaxation_matches_closed_form() {
        let mut g = Graph::new();
        let logits = g.constant(&[2], vec![0.3, -1.1]).unwrap();
        let noise = [0.4, -0.25];
        for temperature in [0.5, 1.0, 2.0] {
            let cfg = GumbelConfig { temperature, ..GumbelConfig::default() };
            let v = relax_on_graph(&mut g, logits, noise, &cfg).unwrap();
            let probs = math::softmax(&[0.3, -1.1]);
            let expect = relax_value([probs[0], probs[1]], noise, temperature);
            assert!((g.item(v) - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn straight_through_forward_is_binary() {
        let mut g = Graph::new();
        let logits = g.constant(&[2], vec![0.3, 0.9]).unwrap();
        let cfg = GumbelConfig { variant: GumbelVariant::StraightThrough, ..GumbelConfig::default() };
        let v = relax_on_graph(&mut g, logits, [0.0, 0.0], &cfg).unwrap();
        assert_eq!(g.item(v), 1.0);
    }

    #[test]
    fn argmax_decisions() {
        assert_eq!(hard_decision([2.0, -1.0]), 0);
        assert_eq!(hard_decision([-1.0, 2.0]), 1);
        assert_eq!(hard_decision([0.3, 0.3]), 1);
    }

    #[test]
    fn relaxed_value_strictly_inside_unit_interval() {
        let mut rng = Rng::new(9, 9);
        // Holds in floating point while the perturbed logit gap stays below ~36.
        for _ in 0..1000 {
            let a = rng.normal() * 2.0;
            let p = math::softmax(&[a, -a]);
            let v = relax_value([p[0], p[1]], sample_gumbel_pair(&mut rng), 1.0);
            assert!(v > 0.0 && v < 1.0);
        }
    }

    #[test]
    fn rejects_non_positive_temperature() {
        let cfg = GumbelConfig { temperature: 0.0, ..GumbelConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_hidden_router_cost_is_small_for_reference_block() {
        // 8 channels at 8×8, the desk-scale reference geometry.
        let r = RouterParams::init(8, DEFAULT_HIDDEN, &mut Rng::new(0, 0)).unwrap();
        let block = crate::blocks::block_macc(&crate::blocks::BlockShape::conv(8, 8, 8)).unwrap();
        assert!(relative_macc(&r, block, 8, 8) < 0.01);
    }
}
