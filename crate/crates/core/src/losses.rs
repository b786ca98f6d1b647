//! Training objectives over routing paths.
//!
//! With `L` groups of `M` relaxed paths `r_{i,j}` and group centers
//! `c_i = mean_j r_{i,j}`:
//!
//! ```text
//! con  = 1/(L·M) Σ_i Σ_j  max(0, ‖r_{i,j} − c_i‖ − m_c)²
//! div  = 1/(L·(L−1)) Σ_i Σ_{j≠i} max(0, m_d − ‖c_i − c_j‖)²
//! cost = mean over items of Σ_k c_k·v_k
//! total = cls + α·con + β·div + γ·cost
//! ```
//!
//! Gradients flow through the centers in both path regularizers.

use alloc::vec::Vec;

use crate::error::shape_err;
use crate::net::RelaxedPath;
use crate::{Error, Graph, Result, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularizerConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub margin_consistency: f64,
    pub margin_diversity: f64,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        RegularizerConfig { alpha: 0.2, beta: 0.2, gamma: 0.0, margin_consistency: 0.2, margin_diversity: 0.5 }
    }
}

impl RegularizerConfig {
    /// All path regularizers and the cost term switched off.
    pub fn vanilla() -> Self {
        RegularizerConfig { alpha: 0.0, beta: 0.0, gamma: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("loss.alpha", self.alpha),
            ("loss.beta", self.beta),
            ("loss.gamma", self.gamma),
            ("loss.m_c", self.margin_consistency),
            ("loss.m_d", self.margin_diversity),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Usage(alloc::format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        Ok(())
    }
}

/// Values of one evaluation of the total objective.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub cls: f64,
    pub con: f64,
    pub div: f64,
    pub cost: f64,
    pub total: f64,
    /// Group centers used by both path regularizers.
    pub centers: Vec<Vec<f64>>,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.cls, self.con, self.div, self.cost, self.total].iter().all(|v| v.is_finite())
    }
}

/// `cls + α·con + β·div + γ·cost`.
pub fn total_loss(cls: f64, con: f64, div: f64, cost: f64, cfg: &RegularizerConfig) -> LossBreakdown {
    LossBreakdown { cls, con, div, cost, total: cls + cfg.alpha * con + cfg.beta * div + cfg.gamma * cost, centers: Vec::new() }
}

/// Squared hinge `max(0, x)²`.
fn hinge_sq(g: &mut Graph, x: Var) -> Var {
    let r = g.relu(x);
    g.square(r)
}

/// Consistency loss over groups of path vectors (each a `[n]` node).
/// Returns the loss and the group centers.
pub fn consistency_on(g: &mut Graph, groups: &[Vec<Var>], margin: f64) -> Result<(Var, Vec<Var>)> {
    let m = groups.first().map(Vec::len).ok_or_else(|| Error::Usage("consistency loss needs L ≥ 1 groups".into()))?;
    if m == 0 || groups.iter().any(|grp| grp.len() != m) {
        return Err(shape_err!("consistency loss needs equally sized, non-empty groups"));
    }
    let mut centers = Vec::with_capacity(groups.len());
    let mut terms = Vec::with_capacity(groups.len() * m);
    for grp in groups {
        let c = g.mean(grp)?;
        for &r in grp {
            let d = g.sub(r, c)?;
            let n = g.norm(d);
            let x = g.add_scalar(n, -margin);
            terms.push(hinge_sq(g, x));
        }
        centers.push(c);
    }
    Ok((g.mean(&terms)?, centers))
}

/// Diversity loss over group centers. With fewer than two groups there are
/// no pairs and the loss is the constant 0.
pub fn diversity_on(g: &mut Graph, centers: &[Var], margin: f64) -> Result<Var> {
    let l = centers.len();
    if l < 2 {
        return Ok(g.scalar(0.0));
    }
    let mut terms = Vec::with_capacity(l * (l - 1));
    for i in 0..l {
        for j in 0..l {
            if i == j {
                continue;
            }
            let d = g.sub(centers[i], centers[j])?;
            let n = g.norm(d);
            let x = g.scale(n, -1.0);
            let x = g.add_scalar(x, margin);
            terms.push(hinge_sq(g, x));
        }
    }
    g.mean(&terms)
}

/// Mean over paths of `Σ_k costs[k]·v_k`.
pub fn cost_on(g: &mut Graph, paths: &[Var], costs: &[f64]) -> Result<Var> {
    if paths.is_empty() {
        return Err(Error::Usage("cost loss of an empty batch".into()));
    }
    let terms = paths.iter().map(|&p| g.dot_const(p, costs)).collect::<Result<Vec<_>>>()?;
    g.mean(&terms)
}

fn path_leaves(g: &mut Graph, paths: &[RelaxedPath]) -> Result<Vec<Var>> {
    paths.iter().map(|p| g.constant(&[p.len()], p.values().to_vec())).collect()
}

/// Consistency loss of `L` groups of `M` relaxed paths.
pub fn consistency_loss(groups: &[Vec<RelaxedPath>], margin: f64) -> Result<f64> {
    let mut g = Graph::new();
    let vars = groups.iter().map(|grp| path_leaves(&mut g, grp)).collect::<Result<Vec<_>>>()?;
    let (loss, _) = consistency_on(&mut g, &vars, margin)?;
    Ok(g.item(loss))
}

/// Diversity loss of `L` group centers; 0 when `L < 2`.
pub fn diversity_loss(centers: &[Vec<f64>], margin: f64) -> Result<f64> {
    let mut g = Graph::new();
    if let Some(first) = centers.first() {
        if centers.iter().any(|c| c.len() != first.len()) {
            return Err(shape_err!("centers of different lengths"));
        }
    }
    let vars = centers.iter().map(|c| g.constant(&[c.len()], c.clone())).collect::<Result<Vec<_>>>()?;
    let loss = diversity_on(&mut g, &vars, margin)?;
    Ok(g.item(loss))
}

/// Mean over `paths` of `Σ_k costs[k]·v_k`.
pub fn cost_loss(paths: &[RelaxedPath], costs: &[f64]) -> Result<f64> {
    if paths.iter().any(|p| p.len() != costs.len()) {
        return Err(shape_err!("relaxed path length does not match {} cost entries", costs.len()));
    }
    let mut g = Graph::new();
    let vars = path_leaves(&mut g, paths)?;
    let loss = cost_on(&mut g, &vars, costs)?;
    Ok(g.item(loss))
}
