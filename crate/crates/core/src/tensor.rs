use alloc::vec;
use alloc::vec::Vec;

use crate::error::shape_err;
use crate::rng::Rng;
use crate::{math, Result};

/// Dense row-major array of `f64` with an optional gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) && !data.is_empty() {
            return Err(shape_err!("zero extent in shape {shape:?}"));
        }
        if numel(shape) != data.len() {
            return Err(shape_err!("shape {shape:?} holds {} values, got {}", numel(shape), data.len()));
        }
        Ok(Tensor { shape: shape.to_vec(), data, requires_grad: false, grad: None })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![0.0; numel(shape)], requires_grad: false, grad: None }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![value; numel(shape)], requires_grad: false, grad: None }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data, requires_grad: false, grad: None }
    }

    /// Gaussian entries scaled by `sqrt(2 / fan_in)`.
    pub fn he_normal(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Self {
        let std = math::sqrt(2.0 / fan_in as f64);
        let data = (0..numel(shape)).map(|_| rng.normal() * std).collect();
        Tensor { shape: shape.to_vec(), data, requires_grad: false, grad: None }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.data.len() {
            return Err(shape_err!("cannot reshape {:?} to {shape:?}", self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Adds `g` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(shape_err!("gradient of length {} for tensor {:?}", g.len(), self.shape));
        }
        match &mut self.grad {
            Some(buf) => buf.iter_mut().zip(g).for_each(|(b, x)| *b += x),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_mismatched_length() {
        assert!(Tensor::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(&[2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn grad_accumulates() {
        let mut t = Tensor::zeros(&[2]);
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        assert_eq!(t.grad.as_deref(), Some(&[2.0, 4.0][..]));
        assert!(t.accumulate_grad(&[1.0]).is_err());
    }
}
