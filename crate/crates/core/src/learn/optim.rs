use serde::{Deserialize, Serialize};

use super::distill::Reduction;
use crate::tensor::ModelParams;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub steps: usize,
    /// Sequences per step.
    pub batch: usize,
    pub prediction_latency: usize,
    /// Distillation weight; 0 disables distillation.
    pub lambda: f64,
    /// Node depths whose activations are distilled; empty picks the last
    /// layer of each of the three deepest subnetworks.
    pub distill_layers: Vec<usize>,
    pub reduction: Reduction,
    pub seed: u64,
    pub eval_sequences: usize,
    /// Evaluate every this many steps (and after the last step).
    pub eval_every: usize,
    /// Rescale each step's gradient to at most this global norm.
    #[serde(default)]
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            steps: 200,
            batch: 8,
            prediction_latency: 0,
            lambda: 0.0,
            distill_layers: Vec::new(),
            reduction: Reduction::Mean,
            seed: 0,
            eval_sequences: 16,
            eval_every: 50,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("momentum {} is outside [0, 1)", self.momentum)));
        }
        if self.lambda < 0.0 {
            return Err(Error::config("lambda must be non-negative"));
        }
        if self.batch == 0 || self.eval_sequences == 0 {
            return Err(Error::config("batch and evaluation sizes must be positive"));
        }
        if matches!(self.clip_norm, Some(c) if c.is_nan() || c <= 0.0) {
            return Err(Error::config("gradient clip norm must be positive"));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::config("learning rate must be positive"));
        }
        Ok(())
    }
}

/// SGD with momentum: `v ← m·v + g`, then `p ← p − lr·v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: ModelParams,
}

impl Sgd {
    pub fn new(params: &ModelParams, learning_rate: f64, momentum: f64) -> Self {
        Sgd {
            learning_rate,
            momentum,
            velocity: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        sgd_momentum_step(params, grads, &mut self.velocity, self.learning_rate, self.momentum)
    }
}

pub fn sgd_momentum_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    velocity: &mut ModelParams,
    learning_rate: f64,
    momentum: f64,
) -> Result<()> {
    velocity.scale(momentum);
    velocity.axpy(1.0, grads)?;
    params.axpy(-learning_rate, velocity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Op;

    fn bundle(v: f64) -> ModelParams {
        let mut p = ModelParams::init(
            &[Op::Linear {
                in_features: 2,
                out_features: 1,
                activation: None,
            }],
            0,
        );
        for t in p.tensors_mut() {
            t.data_mut().fill(v);
        }
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = bundle(0.3);
        let before = p.clone();
        let mut sgd = Sgd::new(&p, 0.1, 0.9);
        sgd.step(&mut p, &bundle(0.0)).unwrap();
        assert!(p.bitwise_eq(&before));
    }

    #[test]
    fn constant_gradient_two_steps() {
        let mut p = bundle(0.0);
        let g = bundle(0.5);
        let mut sgd = Sgd::new(&p, 1.0, 0.9);
        sgd.step(&mut p, &g).unwrap();
        sgd.step(&mut p, &g).unwrap();
        for t in p.tensors() {
            for &v in t.data() {
                assert!((v + 2.9 * 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut p = bundle(1.0);
        let mut sgd = Sgd::new(&p, 0.25, 0.0);
        sgd.step(&mut p, &bundle(2.0)).unwrap();
        sgd.step(&mut p, &bundle(2.0)).unwrap();
        assert!(p.tensors().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn mismatched_shapes_error() {
        let mut p = bundle(1.0);
        let other = ModelParams::init(
            &[Op::Linear {
                in_features: 3,
                out_features: 1,
                activation: None,
            }],
            0,
        );
        let mut sgd = Sgd::new(&p, 0.1, 0.9);
        assert!(sgd.step(&mut p, &other).is_err());
    }
}
