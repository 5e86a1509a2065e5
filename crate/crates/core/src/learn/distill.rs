use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;
use crate::{Error, Result};

/// How the per-layer distillation terms are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Divide the sum over layers by the number of layers.
    #[default]
    Mean,
    Sum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistillLoss {
    pub total: f64,
    pub task: f64,
    /// The weighted activation term, `total - task`.
    pub distill: f64,
    /// Gradient with respect to each student activation.
    pub grads: Vec<Tensor>,
}

/// `task + λ · reduce_i (1/n_i)·‖student_i − teacher_i‖²` where `n_i` is the
/// channel count of layer `i`. Spatial positions are summed, not averaged.
pub fn distillation_loss(
    task_loss: f64,
    student: &[&Tensor],
    teacher: &[&Tensor],
    lambda: f64,
    channel_counts: &[usize],
    reduction: Reduction,
) -> Result<DistillLoss> {
    let m = student.len();
    if teacher.len() != m || channel_counts.len() != m {
        return Err(Error::shape(format!(
            "{m} student activations, {} teacher activations, {} channel counts",
            teacher.len(),
            channel_counts.len()
        )));
    }
    let scale = match reduction {
        Reduction::Mean if m > 0 => lambda / m as f64,
        _ => lambda,
    };
    let mut term = 0.0;
    let mut grads = Vec::with_capacity(m);
    for ((s, t), &n) in student.iter().zip(teacher).zip(channel_counts) {
        if n == 0 {
            return Err(Error::shape("channel count must be positive"));
        }
        let diff = s.sub(t)?;
        term += diff.squared_norm() / n as f64;
        grads.push(diff.scale(2.0 * scale / n as f64));
    }
    let distill = scale * term;
    Ok(DistillLoss {
        total: task_loss + distill,
        task: task_loss,
        distill,
        grads,
    })
}
