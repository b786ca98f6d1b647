//! Gated residual blocks, the always-run stem and head, and the per-block
//! cost table.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::shape_err;
use crate::rng::Rng;
use crate::{Error, Graph, Result, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    /// `a + conv(relu(conv(a) + b1)) + b2` on `[C, H, W]`.
    ConvResidual,
    /// `a + W2·relu(W1·a + b1) + b2` on `[D, 1, 1]`.
    DenseResidual,
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::ConvResidual => "conv",
            BlockKind::DenseResidual => "dense",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "conv" => Some(BlockKind::ConvResidual),
            "dense" => Some(BlockKind::DenseResidual),
            _ => None,
        }
    }
}

/// Input/output geometry of one gated block. Dense blocks use `height = width = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockShape {
    pub kind: BlockKind,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl BlockShape {
    pub fn conv(channels: usize, height: usize, width: usize) -> Self {
        BlockShape { kind: BlockKind::ConvResidual, channels, height, width }
    }

    pub fn dense(width: usize) -> Self {
        BlockShape { kind: BlockKind::DenseResidual, channels: width, height: 1, width: 1 }
    }

    pub fn activation_shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(shape_err!("zero extent in block shape {self:?}"));
        }
        if self.kind == BlockKind::DenseResidual && (self.height != 1 || self.width != 1) {
            return Err(shape_err!("dense blocks operate on [D, 1, 1], got {self:?}"));
        }
        Ok(())
    }
}

/// Multiply-accumulates of one residual block: two 3×3 convs
/// (`2·H·W·C·C·9`) or two D×D products (`2·D²`). Bias and activation
/// costs are not counted.
pub fn block_macc(shape: &BlockShape) -> Result<u64> {
    shape.validate()?;
    let c = shape.channels as u64;
    Ok(match shape.kind {
        BlockKind::ConvResidual => 2 * (shape.height as u64 * shape.width as u64 * c * c * 9),
        BlockKind::DenseResidual => 2 * c * c,
    })
}

/// Per-block multiply-accumulate counts `c_k`, in MACCs.
#[derive(Clone, Debug, PartialEq)]
pub struct CostTable {
    entries: Vec<u64>,
}

impl CostTable {
    pub fn new(entries: Vec<u64>) -> Result<Self> {
        if entries.contains(&0) {
            return Err(Error::Usage("cost table entries must be positive".into()));
        }
        Ok(CostTable { entries })
    }

    pub fn entries(&self) -> &[u64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Cost of running every block.
    pub fn total(&self) -> u64 {
        self.entries.iter().sum()
    }

    /// Entries in GMACCs (`c_k / 1e9`).
    pub fn gmaccs(&self) -> Vec<f64> {
        self.entries.iter().map(|&c| c as f64 / 1e9).collect()
    }

    /// `Σ c_k · u_k` for a binary path.
    pub fn path_cost(&self, bits: &[u8]) -> Result<u64> {
        if bits.len() != self.entries.len() {
            return Err(shape_err!("path of length {} for {} blocks", bits.len(), self.entries.len()));
        }
        Ok(self.entries.iter().zip(bits).filter(|(_, &b)| b != 0).map(|(c, _)| c).sum())
    }
}

pub fn build_cost_table(shapes: &[BlockShape]) -> Result<CostTable> {
    let entries = shapes.iter().map(block_macc).collect::<Result<Vec<_>>>()?;
    CostTable::new(entries)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    pub shape: BlockShape,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Graph handles of a bound [`BlockParams`].
#[derive(Clone, Copy, Debug)]
pub struct BlockVars {
    w1: Var,
    b1: Var,
    w2: Var,
    b2: Var,
}

impl BlockParams {
    /// Fan-in scaled Gaussian weights, zero biases. The second layer is
    /// further multiplied by `residual_gain`; without normalization layers a
    /// stack of `n` blocks stays well conditioned with a gain near `1/√n`.
    pub fn init(shape: BlockShape, residual_gain: f64, rng: &mut Rng) -> Result<Self> {
        shape.validate()?;
        let c = shape.channels;
        let (wshape, fan_in) = match shape.kind {
            BlockKind::ConvResidual => (vec![c, c, 3, 3], c * 9),
            BlockKind::DenseResidual => (vec![c, c], c),
        };
        Ok(BlockParams {
            shape,
            w1: Tensor::he_normal(&wshape, fan_in, rng).with_grad(),
            b1: Tensor::zeros(&[c]).with_grad(),
            w2: Tensor::he_normal(&wshape, fan_in, rng).scaled(residual_gain).with_grad(),
            b2: Tensor::zeros(&[c]).with_grad(),
        })
    }

    /// Checks that the stored tensors agree with `shape`.
    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        let c = self.shape.channels;
        let wshape: &[usize] = match self.shape.kind {
            BlockKind::ConvResidual => &[c, c, 3, 3],
            BlockKind::DenseResidual => &[c, c],
        };
        for (name, t, want) in [("w1", &self.w1, wshape), ("w2", &self.w2, wshape), ("b1", &self.b1, &[c][..]), ("b2", &self.b2, &[c][..])] {
            if t.shape() != want {
                return Err(shape_err!("block {name} has shape {:?}, expected {want:?}", t.shape()));
            }
            if !t.is_finite() {
                return Err(Error::Data(format!("block {name} holds non-finite values")));
            }
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

    pub fn bind(&self, g: &mut Graph) -> BlockVars {
        BlockVars { w1: g.tensor(&self.w1), b1: g.tensor(&self.b1), w2: g.tensor(&self.w2), b2: g.tensor(&self.b2) }
    }

    /// Residual output `a + f(a)`.
    pub fn forward(&self, g: &mut Graph, vars: &BlockVars, a: Var) -> Result<Var> {
        let want = self.shape.activation_shape();
        if g.shape(a) != want {
            return Err(shape_err!("block expects {want:?}, got {:?}", g.shape(a)));
        }
        let residual = match self.shape.kind {
            BlockKind::ConvResidual => {
                let h = g.conv3x3(a, vars.w1)?;
                let h = g.channel_bias(h, vars.b1)?;
                let h = g.relu(h);
                let h = g.conv3x3(h, vars.w2)?;
                g.channel_bias(h, vars.b2)?
            }
            BlockKind::DenseResidual => {
                let d = self.shape.channels;
                let z = g.reshape(a, &[d, 1])?;
                let h = g.matmul(vars.w1, z)?;
                let h = g.channel_bias(h, vars.b1)?;
                let h = g.relu(h);
                let h = g.matmul(vars.w2, h)?;
                let h = g.channel_bias(h, vars.b2)?;
                g.reshape(h, &want)?
            }
        };
        g.add(a, residual)
    }
}

/// Always-executed scaffolding around the gated blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct StemHead {
    pub kind: BlockKind,
    pub in_shape: [usize; 3],
    /// Number of 2×2 average-pool stages after the stem conv (conv kind only).
    pub pools: usize,
    pub stem_w: Tensor,
    pub stem_b: Tensor,
    pub head_w: Tensor,
    pub head_b: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct StemHeadVars {
    stem_w: Var,
    stem_b: Var,
    head_w: Var,
    head_b: Var,
}

impl StemHead {
    pub fn init(kind: BlockKind, in_shape: [usize; 3], channels: usize, pools: usize, num_classes: usize, rng: &mut Rng) -> Result<Self> {
        let [cin, h, w] = in_shape;
        if cin == 0 || h == 0 || w == 0 || channels == 0 || num_classes == 0 {
            return Err(shape_err!("zero extent in stem/head ({in_shape:?}, C={channels}, classes={num_classes})"));
        }
        let (stem_w, pools) = match kind {
            BlockKind::ConvResidual => {
                let f = 1usize << pools;
                if h % f != 0 || w % f != 0 {
                    return Err(shape_err!("input {h}×{w} not divisible by 2^{pools}"));
                }
                (Tensor::he_normal(&[channels, cin, 3, 3], cin * 9, rng), pools)
            }
            BlockKind::DenseResidual => (Tensor::he_normal(&[channels, cin * h * w], cin * h * w, rng), 0),
        };
        Ok(StemHead {
            kind,
            in_shape,
            pools,
            stem_w: stem_w.with_grad(),
            stem_b: Tensor::zeros(&[channels]).with_grad(),
            head_w: Tensor::he_normal(&[num_classes, channels], channels, rng).scaled(0.5).with_grad(),
            head_b: Tensor::zeros(&[num_classes]).with_grad(),
        })
    }

    pub fn channels(&self) -> usize {
        self.stem_b.len()
    }

    pub fn num_classes(&self) -> usize {
        self.head_b.len()
    }

    /// Shape of the activation handed to the first gated block.
    pub fn block_shape(&self) -> BlockShape {
        match self.kind {
            BlockKind::ConvResidual => {
                let f = 1usize << self.pools;
                BlockShape::conv(self.channels(), self.in_shape[1] / f, self.in_shape[2] / f)
            }
            BlockKind::DenseResidual => BlockShape::dense(self.channels()),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 4] {
        [&self.stem_w, &self.stem_b, &self.head_w, &self.head_b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.stem_w, &mut self.stem_b, &mut self.head_w, &mut self.head_b]
    }

    pub fn bind(&self, g: &mut Graph) -> StemHeadVars {
        StemHeadVars {
            stem_w: g.tensor(&self.stem_w),
            stem_b: g.tensor(&self.stem_b),
            head_w: g.tensor(&self.head_w),
            head_b: g.tensor(&self.head_b),
        }
    }

    pub fn stem(&self, g: &mut Graph, vars: &StemHeadVars, x: Var) -> Result<Var> {
        if g.shape(x) != self.in_shape {
            return Err(shape_err!("network expects input {:?}, got {:?}", self.in_shape, g.shape(x)));
        }
        match self.kind {
            BlockKind::ConvResidual => {
                let h = g.conv3x3(x, vars.stem_w)?;
                let h = g.channel_bias(h, vars.stem_b)?;
                let mut h = g.relu(h);
                for _ in 0..self.pools {
                    h = g.avg_pool2(h)?;
                }
                Ok(h)
            }
            BlockKind::DenseResidual => {
                let d = self.channels();
                let flat = g.reshape(x, &[self.in_shape.iter().product(), 1])?;
                let h = g.matmul(vars.stem_w, flat)?;
                let h = g.channel_bias(h, vars.stem_b)?;
                let h = g.relu(h);
                g.reshape(h, &[d, 1, 1])
            }
        }
    }

    /// Global average pool followed by the linear classifier.
    pub fn head(&self, g: &mut Graph, vars: &StemHeadVars, a: Var) -> Result<Var> {
        let c = self.channels();
        let z = g.global_avg_pool(a)?;
        let z = g.reshape(z, &[c, 1])?;
        let logits = g.matmul(vars.head_w, z)?;
        let logits = g.reshape(logits, &[self.num_classes()])?;
        g.channel_bias(logits, vars.head_b)
    }
}

impl Tensor {
    pub(crate) fn scaled(mut self, s: f64) -> Self {
        self.data_mut().iter_mut().for_each(|x| *x *= s);
        self
    }
}
