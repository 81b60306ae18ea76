//! Optimizer selection shared by the generator and the visual discriminator.

use camo_nn::{Optimizer, RmsProp, Sgd};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Adaptive scaling (the default).
    RmsProp,
    /// Plain `θ ← θ − lr·g`, for exact single-step checks.
    Sgd,
}

#[derive(Clone, Debug)]
pub enum AnyOptimizer {
    RmsProp(RmsProp),
    Sgd(Sgd),
}

impl AnyOptimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        match kind {
            OptimizerKind::RmsProp => Self::RmsProp(RmsProp::new(lr, n_params)),
            OptimizerKind::Sgd => Self::Sgd(Sgd { lr }),
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        match self {
            Self::RmsProp(o) => o.lr = lr,
            Self::Sgd(o) => o.lr = lr,
        }
    }
}

impl Optimizer for AnyOptimizer {
    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self {
            Self::RmsProp(o) => o.step(params, grad),
            Self::Sgd(o) => o.step(params, grad),
        }
    }
}
