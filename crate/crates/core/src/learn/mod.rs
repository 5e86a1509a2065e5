//! Training of small models through their unrolled graphs: reverse-mode
//! gradients, SGD with momentum, predictive targets, distillation from a
//! sequential teacher and weight transfer between wirings.

mod backward;
mod distill;
mod io;
mod optim;
mod task;
mod train;

pub use backward::backward;
pub use distill::{distillation_loss, DistillLoss, Reduction};
pub use io::{
    load_checkpoint, save_checkpoint, write_loss_csv, CheckpointLayer, CheckpointManifest, CHECKPOINT_MANIFEST,
    CHECKPOINT_TENSORS,
};
pub use optim::{sgd_momentum_step, Sgd, TrainConfig};
pub use task::{Sequence, SyntheticTask, TaskKind, DIRECTION_CLASSES};
pub use train::{
    default_distill_layers, evaluate, train_distilled, train_predictive, transfer_weights_experiment, CurvePoint,
    LossParts, Objective, TrainOutcome, TransferGrid,
};
