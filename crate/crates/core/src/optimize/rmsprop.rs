use serde::{Deserialize, Serialize};
use stylestroke_tensor::{Tensor, TensorError};

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f32 = 0.99;
pub const DEFAULT_EPS: f32 = 1e-8;

/// Per-group learning rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    pub trajectories: f32,
    pub radii: f32,
    pub colors: f32,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            trajectories: 0.3,
            radii: 0.3,
            colors: 0.03,
        }
    }
}

/// RMSProp without momentum:
/// `v ← α·v + (1-α)·g²`, `p ← p - lr·g / (√v + ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rmsprop {
    pub v: Tensor,
    pub lr: f32,
    pub alpha: f32,
    pub eps: f32,
}

impl Rmsprop {
    pub fn new(shape: &[usize], lr: f32) -> Self {
        Rmsprop {
            v: Tensor::zeros(shape.to_vec()),
            lr,
            alpha: DEFAULT_ALPHA,
            eps: DEFAULT_EPS,
        }
    }

    pub fn step(&mut self, params: &mut Tensor, grads: &Tensor) -> Result<()> {
        if params.shape() != grads.shape() || params.shape() != self.v.shape() {
            return Err(Error::Tensor(TensorError::InvalidShape(format!(
                "rmsprop shapes differ: params {:?}, grads {:?}, state {:?}",
                params.shape(),
                grads.shape(),
                self.v.shape()
            ))));
        }
        let (a, lr, eps) = (self.alpha, self.lr, self.eps);
        for ((p, &g), v) in params.data_mut().iter_mut().zip(grads.data()).zip(self.v.data_mut()) {
            *v = a * *v + (1.0 - a) * g * g;
            *p -= lr * g / (v.sqrt() + eps);
        }
        Ok(())
    }
}
