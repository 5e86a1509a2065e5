use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

/// Task losses. Each returns the scalar value and its gradient with respect
/// to the prediction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    /// Keypoint heatmap loss; `positive_weight` scales the positive term.
    WeightedSigmoidXent { positive_weight: f64 },
    /// Classification loss; the target is a one-hot or class-index tensor.
    SoftmaxXent,
    SquaredError,
}

impl Default for Loss {
    fn default() -> Self {
        Loss::WeightedSigmoidXent {
            positive_weight: 10.0,
        }
    }
}

impl Loss {
    pub fn eval(&self, prediction: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
        match *self {
            Loss::WeightedSigmoidXent { positive_weight } => {
                weighted_sigmoid_xent_grad(prediction, target, positive_weight)
            }
            Loss::SoftmaxXent => {
                let label = class_label(target)?;
                let flat = Tensor::new(vec![prediction.len()], prediction.data().to_vec())?;
                let (v, g) = softmax_xent_grad(&flat, label)?;
                Ok((v, g.reshape(prediction.shape())?))
            }
            Loss::SquaredError => squared_error_grad(prediction, target),
        }
    }

    pub fn value(&self, prediction: &Tensor, target: &Tensor) -> Result<f64> {
        self.eval(prediction, target).map(|(v, _)| v)
    }
}

/// A rank-0 target holds the class index; anything else is read as one-hot.
fn class_label(target: &Tensor) -> Result<usize> {
    if target.rank() == 0 {
        let v = target.data()[0];
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::shape(format!("class index {v} is not a natural number")));
        }
        return Ok(v as usize);
    }
    let mut best = 0;
    for (i, &v) in target.data().iter().enumerate() {
        if v > target.data()[best] {
            best = i;
        }
    }
    Ok(best)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{what}: prediction {:?} vs target {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `mean(w·t·softplus(−x) + (1−t)·softplus(x))`.
pub fn weighted_sigmoid_xent(logits: &Tensor, targets: &Tensor, positive_weight: f64) -> Result<f64> {
    weighted_sigmoid_xent_grad(logits, targets, positive_weight).map(|(v, _)| v)
}

fn weighted_sigmoid_xent_grad(
    logits: &Tensor,
    targets: &Tensor,
    positive_weight: f64,
) -> Result<(f64, Tensor)> {
    same_shape(logits, targets, "weighted sigmoid cross-entropy")?;
    let n = logits.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&x, &t) in logits.data().iter().zip(targets.data()) {
        total += positive_weight * t * softplus(-x) + (1.0 - t) * softplus(x);
        let s = sigmoid(x);
        grad.push((positive_weight * t * (s - 1.0) + (1.0 - t) * s) / n);
    }
    Ok((total / n, Tensor::new(logits.shape().to_vec(), grad)?))
}

/// `−log softmax(logits)[label]` for rank-1 logits.
pub fn softmax_xent(logits: &Tensor, label: usize) -> Result<f64> {
    softmax_xent_grad(logits, label).map(|(v, _)| v)
}

fn softmax_xent_grad(logits: &Tensor, label: usize) -> Result<(f64, Tensor)> {
    if logits.rank() != 1 {
        return Err(Error::shape(format!(
            "softmax logits must be rank 1, got {:?}",
            logits.shape()
        )));
    }
    if label >= logits.len() {
        return Err(Error::shape(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let max = logits.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.data().iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let value = z.ln() + max - logits.data()[label];
    let grad = exps
        .iter()
        .enumerate()
        .map(|(i, &e)| e / z - if i == label { 1.0 } else { 0.0 })
        .collect();
    Ok((value, Tensor::new(vec![logits.len()], grad)?))
}

/// Mean squared error.
pub fn squared_error(prediction: &Tensor, target: &Tensor) -> Result<f64> {
    squared_error_grad(prediction, target).map(|(v, _)| v)
}

fn squared_error_grad(prediction: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    same_shape(prediction, target, "squared error")?;
    let n = prediction.len() as f64;
    let diff = prediction.sub(target)?;
    let value = diff.squared_norm() / n;
    Ok((value, diff.scale(2.0 / n)))
}
