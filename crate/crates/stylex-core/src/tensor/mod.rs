//! Dense f32 tensors and a define-by-run reverse-mode autodiff tape.
//!
//! The engine is deliberately small: contiguous row-major storage, a flat
//! operation tape rebuilt every forward pass, and single-threaded kernels.
//! It is sized for training the desk-scale style encoder, not for general
//! workloads.

mod kernels;
mod tape;

pub use tape::{BatchNormState, BnMode, NodeId, Tape, BN_EPS, NORM_EPS};

/// Norm floor shared with the tape's cosine op.
pub fn tape_norm_eps() -> f64 {
    NORM_EPS
}

use crate::error::TensorError;

/// A dense tensor: shape, contiguous f32 storage, and an optional gradient
/// buffer of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f32>>,
}

impl Tensor {
    /// Build a tensor from a shape and matching data buffer.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        if shape.iter().any(|&e| e == 0) {
            return Err(TensorError::ZeroExtent(shape));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeDataMismatch {
                shape,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(value: f32) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
            requires_grad: false,
            grad: None,
        }
    }

    /// Mark the tensor as a differentiation leaf.
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Zero an existing gradient buffer or allocate a fresh one.
    pub fn zero_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|v| *v = 0.0),
            None => self.grad = Some(vec![0.0; self.data.len()]),
        }
    }

    pub(crate) fn dims4(&self, op: &'static str) -> Result<[usize; 4], TensorError> {
        if self.shape.len() != 4 {
            return Err(TensorError::RankMismatch {
                op,
                expected: 4,
                shape: self.shape.clone(),
            });
        }
        Ok([self.shape[0], self.shape[1], self.shape[2], self.shape[3]])
    }

    pub(crate) fn dims2(&self, op: &'static str) -> Result<[usize; 2], TensorError> {
        if self.shape.len() != 2 {
            return Err(TensorError::RankMismatch {
                op,
                expected: 2,
                shape: self.shape.clone(),
            });
        }
        Ok([self.shape[0], self.shape[1]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_mismatched_data() {
        let err = Tensor::new(vec![2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, TensorError::ShapeDataMismatch { .. }));
    }

    #[test]
    fn new_rejects_zero_extent() {
        let err = Tensor::new(vec![2, 0], vec![]).unwrap_err();
        assert!(matches!(err, TensorError::ZeroExtent(_)));
    }

    #[test]
    fn zero_grad_allocates_same_shape() {
        let mut t = Tensor::full(&[2, 2], 3.0);
        t.zero_grad();
        assert_eq!(t.grad.as_ref().unwrap().len(), t.numel());
    }
}
