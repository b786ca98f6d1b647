//! SGD with momentum and L2 weight decay folded into the gradient.

use alloc::vec::Vec;

use crate::error::shape_err;
use crate::{Error, Result, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct SgdState {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub velocity: Vec<Vec<f64>>,
}

impl SgdState {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(Error::Usage(alloc::format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Usage(alloc::format!("momentum must lie in [0, 1), got {momentum}")));
        }
        if !(weight_decay >= 0.0) {
            return Err(Error::Usage(alloc::format!("weight decay must be non-negative, got {weight_decay}")));
        }
        Ok(SgdState { lr, momentum, weight_decay, velocity: Vec::new() })
    }

    /// One step over `params` using their `grad` buffers (missing grads count
    /// as zero):
    ///
    /// ```text
    /// g' = grad + weight_decay · param
    /// velocity = momentum · velocity + g'
    /// param -= lr · velocity
    /// ```
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| alloc::vec![0.0; p.len()]).collect();
        }
        if self.velocity.len() != params.len() {
            return Err(shape_err!("optimizer tracks {} tensors, got {}", self.velocity.len(), params.len()));
        }
        for (p, vel) in params.iter_mut().zip(&mut self.velocity) {
            if vel.len() != p.len() {
                return Err(shape_err!("velocity of length {} for tensor {:?}", vel.len(), p.shape()));
            }
            if let Some(g) = &p.grad {
                if g.len() != p.len() {
                    return Err(shape_err!("gradient of length {} for tensor {:?}", g.len(), p.shape()));
                }
            }
            let grad = p.grad.take();
            let (lr, mom, wd) = (self.lr, self.momentum, self.weight_decay);
            for (j, (w, v)) in p.data_mut().iter_mut().zip(vel.iter_mut()).enumerate() {
                let g = grad.as_ref().map_or(0.0, |g| g[j]) + wd * *w;
                *v = mom * *v + g;
                *w -= lr * *v;
            }
            p.grad = grad;
        }
        Ok(())
    }
}

/// Functional form of [`SgdState::step`] with explicit gradients.
pub fn sgd_update(params: &mut [&mut Tensor], grads: &[&[f64]], state: &mut SgdState) -> Result<()> {
    if grads.len() != params.len() {
        return Err(shape_err!("{} gradients for {} tensors", grads.len(), params.len()));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        if g.len() != p.len() {
            return Err(shape_err!("gradient of length {} for tensor {:?}", g.len(), p.shape()));
        }
        p.grad = Some(g.to_vec());
    }
    state.step(params)
}
