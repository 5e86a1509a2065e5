use serde::Serialize;

use super::backward::backward;
use super::distill::{distillation_loss, Reduction};
use super::optim::{Sgd, TrainConfig};
use super::task::{Sequence, SyntheticTask};
use crate::analysis::information_latency;
use crate::exec::forward;
use crate::graph::{unroll, ArchitectureSpec, PipelineConfig, UnrolledGraph, Wiring};
use crate::par;
use crate::tensor::{Loss, ModelParams, Tensor};
use crate::{Error, Result};

/// Offset between the training and evaluation sequence streams.
const EVAL_STREAM: u64 = 1 << 40;
/// Probability clip used when turning a copied target into logits.
const COPY_CLIP: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LossParts {
    pub total: f64,
    pub task: f64,
    pub distill: f64,
}

impl LossParts {
    fn add(&mut self, o: &LossParts) {
        self.total += o.total;
        self.task += o.task;
        self.distill += o.distill;
    }

    fn scaled(mut self, k: f64) -> Self {
        self.total *= k;
        self.task *= k;
        self.distill *= k;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub step: usize,
    pub train_loss: f64,
    pub eval_loss: Option<f64>,
    pub task_loss: f64,
    pub distill_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub curve: Vec<CurvePoint>,
    /// Held-out task loss before the first step.
    pub initial_eval: f64,
    /// Held-out task loss of the returned parameters.
    pub final_eval: f64,
}

/// A frozen teacher whose activations the student is pulled towards.
struct Teacher<'a> {
    graph: UnrolledGraph,
    params: &'a ModelParams,
    layers: Vec<usize>,
    channels: Vec<usize>,
    lambda: f64,
    reduction: Reduction,
}

/// Per-sequence loss of one model under one wiring.
pub struct Objective<'a> {
    graph: UnrolledGraph,
    loss: Loss,
    prediction_latency: usize,
    information_latency: usize,
    /// First output frame that enters the loss.
    first_frame: usize,
    teacher: Option<Teacher<'a>>,
}

impl<'a> Objective<'a> {
    /// Outputs at frames `t ≥ max(p, L)` are compared with the target of
    /// frame `t − p`, where `p` is the prediction latency and `L` the
    /// information latency: earlier outputs cannot depend on any frame.
    pub fn new(
        arch: &ArchitectureSpec,
        config: &PipelineConfig,
        task: &SyntheticTask,
        prediction_latency: usize,
    ) -> Result<Self> {
        task.validate()?;
        let graph = unroll(arch, config, task.length)?;
        let head = graph.topology.head();
        let out = graph.topology.nodes[head].out_shape;
        let want = match task.kind {
            super::TaskKind::MovingDot => [task.target_channels(), task.height, task.width],
            super::TaskKind::SequenceClassification => [task.target_channels(), 1, 1],
        };
        if out != want {
            return Err(Error::shape(format!(
                "model output {out:?} does not match task targets {want:?}"
            )));
        }
        let info = information_latency(&graph).map_err(|_| too_short(task, 0, prediction_latency))?;
        let latency = info.information_latency.max(0) as usize;
        if task.length <= latency + prediction_latency {
            return Err(too_short(task, latency, prediction_latency));
        }
        Ok(Objective {
            graph,
            loss: task.loss,
            prediction_latency,
            information_latency: latency,
            first_frame: latency.max(prediction_latency),
            teacher: None,
        })
    }

    /// Adds a distillation term towards `params` evaluated with sequential
    /// wiring at node depths `layers`.
    pub fn with_teacher(
        mut self,
        params: &'a ModelParams,
        layers: Vec<usize>,
        lambda: f64,
        reduction: Reduction,
    ) -> Result<Self> {
        let depths = self.graph.topology.nodes.len();
        if let Some(&bad) = layers.iter().find(|&&d| d >= depths) {
            return Err(Error::config(format!("distillation layer {bad} out of range")));
        }
        let cfg = self.graph.config.clone().with_wiring(Wiring::Sequential);
        let graph = UnrolledGraph::build(self.graph.topology.clone(), cfg, 0, self.graph.frames)?;
        let channels = layers.iter().map(|&d| graph.topology.nodes[d].out_shape[0]).collect();
        self.teacher = Some(Teacher {
            graph,
            params,
            layers,
            channels,
            lambda,
            reduction,
        });
        Ok(self)
    }

    pub fn graph(&self) -> &UnrolledGraph {
        &self.graph
    }

    pub fn first_frame(&self) -> usize {
        self.first_frame
    }

    fn counted(&self) -> std::ops::Range<usize> {
        self.first_frame..self.graph.frames
    }

    /// Task and distillation loss of one sequence and, if `want_grad`, the
    /// parameter gradient.
    pub fn evaluate(
        &self,
        params: &ModelParams,
        seq: &Sequence,
        want_grad: bool,
    ) -> Result<(LossParts, Option<ModelParams>)> {
        let outputs = forward(&self.graph, params, &seq.frames)?;
        let teacher_out = match &self.teacher {
            Some(t) => Some(forward(&t.graph, t.params, &seq.frames)?),
            None => None,
        };
        let head = self.graph.topology.head();
        let weight = 1.0 / self.counted().len() as f64;
        let mut parts = LossParts::default();
        let mut seeds: Vec<(usize, Tensor)> = Vec::new();
        for t in self.counted() {
            let node = self
                .graph
                .node_at(head, t as i64)
                .ok_or_else(|| Error::validation(format!("head has no instance at frame {t}")))?;
            let target = &seq.targets[t - self.prediction_latency];
            let (value, grad) = self.loss.eval(&outputs[node], target)?;
            let mut frame = LossParts {
                total: value,
                task: value,
                distill: 0.0,
            };
            if want_grad {
                seeds.push((node, grad.scale(weight)));
            }
            if let (Some(teacher), Some(tout)) = (&self.teacher, &teacher_out) {
                let mut nodes = Vec::new();
                let mut student = Vec::new();
                let mut reference = Vec::new();
                let mut channels = Vec::new();
                for (&d, &n) in teacher.layers.iter().zip(&teacher.channels) {
                    let (Some(s), Some(r)) = (
                        self.graph.node_at(d, t as i64),
                        teacher.graph.node_at(d, t as i64),
                    ) else {
                        continue;
                    };
                    nodes.push(s);
                    student.push(&*outputs[s]);
                    reference.push(&*tout[r]);
                    channels.push(n);
                }
                let d = distillation_loss(value, &student, &reference, teacher.lambda, &channels, teacher.reduction)?;
                frame = LossParts {
                    total: d.total,
                    task: d.task,
                    distill: d.distill,
                };
                if want_grad {
                    for (s, g) in nodes.into_iter().zip(d.grads) {
                        seeds.push((s, g.scale(weight)));
                    }
                }
            }
            parts.add(&frame);
        }
        let parts = parts.scaled(weight);
        let grads = if want_grad {
            Some(backward(&self.graph, params, &seq.frames, &outputs, &seeds)?)
        } else {
            None
        };
        Ok((parts, grads))
    }

    /// Mean loss and gradient over a batch, reduced in sequence order.
    pub fn batch_gradient(&self, params: &ModelParams, batch: &[Sequence]) -> Result<(LossParts, ModelParams)> {
        let results = par::map(batch, |seq| self.evaluate(params, seq, true));
        let mut parts = LossParts::default();
        let mut grads = params.zeros_like();
        for r in results {
            let (p, g) = r?;
            parts.add(&p);
            grads.axpy(1.0, &g.expect("gradient requested"))?;
        }
        let k = 1.0 / batch.len() as f64;
        grads.scale(k);
        Ok((parts.scaled(k), grads))
    }

    /// Mean task loss over `sequences` held-out sequences.
    pub fn eval_loss(&self, params: &ModelParams, task: &SyntheticTask, seed: u64, sequences: usize) -> Result<f64> {
        let seqs = eval_sequences(task, seed, sequences)?;
        let losses = par::map(&seqs, |s| self.evaluate(params, s, false).map(|(p, _)| p.task));
        let mut total = 0.0;
        for l in losses {
            total += l?;
        }
        Ok(total / sequences as f64)
    }

    /// Task loss of predicting, at each counted frame, the target of the
    /// newest frame the model could have seen. Heatmap targets are clipped
    /// to `[0.01, 0.99]` and mapped to logits for the sigmoid loss.
    pub fn copy_last_loss(&self, task: &SyntheticTask, seed: u64, sequences: usize) -> Result<f64> {
        let lag = self.information_latency;
        let seqs = eval_sequences(task, seed, sequences)?;
        let mut total = 0.0;
        for seq in &seqs {
            let mut sum = 0.0;
            for t in self.counted() {
                let copied = &seq.targets[t - lag];
                let pred = match self.loss {
                    Loss::SquaredError => copied.clone(),
                    _ => copied.map(|v| {
                        let p = v.clamp(COPY_CLIP, 1.0 - COPY_CLIP);
                        (p / (1.0 - p)).ln()
                    }),
                };
                sum += self.loss.value(&pred, &seq.targets[t - self.prediction_latency])?;
            }
            total += sum / self.counted().len() as f64;
        }
        Ok(total / sequences as f64)
    }
}

fn too_short(task: &SyntheticTask, latency: usize, prediction: usize) -> Error {
    Error::config(format!(
        "sequences of {} frames are too short for information latency {latency} plus prediction latency {prediction}",
        task.length
    ))
}

fn eval_sequences(task: &SyntheticTask, seed: u64, n: usize) -> Result<Vec<Sequence>> {
    (0..n as u64).map(|i| task.sequence(seed, EVAL_STREAM + i)).collect()
}

/// The last layer of each of the three deepest subnetworks.
pub fn default_distill_layers(config: &PipelineConfig, num_layers: usize) -> Vec<usize> {
    let ranges = config.subnet_layers(num_layers);
    let mut layers: Vec<usize> = ranges
        .iter()
        .rev()
        .filter(|r| !r.is_empty())
        .take(3)
        .map(|r| r.end - 1)
        .collect();
    layers.reverse();
    layers
}

/// Trains from a seeded initialisation with the task loss only.
pub fn train_predictive(
    arch: &ArchitectureSpec,
    config: &PipelineConfig,
    train: &TrainConfig,
    task: &SyntheticTask,
) -> Result<TrainOutcome> {
    let objective = Objective::new(arch, config, task, train.prediction_latency)?;
    let init = ModelParams::init(&objective.graph.topology.ops(), train.seed);
    run_training(&objective, init, train, task)
}

/// Trains a student under `config` against a frozen teacher evaluated with
/// sequential wiring. With `lambda = 0` this is exactly `train_predictive`.
pub fn train_distilled(
    arch: &ArchitectureSpec,
    config: &PipelineConfig,
    train: &TrainConfig,
    task: &SyntheticTask,
    teacher: &ModelParams,
) -> Result<TrainOutcome> {
    let objective = Objective::new(arch, config, task, train.prediction_latency)?;
    let layers = if train.distill_layers.is_empty() {
        default_distill_layers(config, objective.graph.num_layers())
    } else {
        train.distill_layers.clone()
    };
    if train.lambda > 0.0 && layers.is_empty() {
        return Err(Error::config("distillation needs at least one layer"));
    }
    let objective = objective.with_teacher(teacher, layers, train.lambda, train.reduction)?;
    let init = ModelParams::init(&objective.graph.topology.ops(), train.seed);
    run_training(&objective, init, train, task)
}

fn run_training(
    objective: &Objective<'_>,
    mut params: ModelParams,
    train: &TrainConfig,
    task: &SyntheticTask,
) -> Result<TrainOutcome> {
    train.validate()?;
    let mut sgd = Sgd::new(&params, train.learning_rate, train.momentum);
    let initial_eval = objective.eval_loss(&params, task, train.seed, train.eval_sequences)?;
    let mut curve = Vec::with_capacity(train.steps);
    let mut final_eval = initial_eval;
    for step in 1..=train.steps {
        let base = ((step - 1) * train.batch) as u64;
        let batch = (0..train.batch as u64)
            .map(|i| task.sequence(train.seed, base + i))
            .collect::<Result<Vec<_>>>()?;
        let (parts, mut grads) = objective.batch_gradient(&params, &batch)?;
        if let Some(c) = train.clip_norm {
            let norm = grads.squared_norm().sqrt();
            if norm > c {
                grads.scale(c / norm);
            }
        }
        if !parts.total.is_finite() {
            return Err(Error::validation(format!("training diverged at step {step}")));
        }
        sgd.step(&mut params, &grads)?;
        let eval_loss = if step % train.eval_every.max(1) == 0 || step == train.steps {
            final_eval = objective.eval_loss(&params, task, train.seed, train.eval_sequences)?;
            Some(final_eval)
        } else {
            None
        };
        curve.push(CurvePoint {
            step,
            train_loss: parts.total,
            eval_loss,
            task_loss: parts.task,
            distill_loss: parts.distill,
        });
    }
    Ok(TrainOutcome {
        params,
        curve,
        initial_eval,
        final_eval,
    })
}

/// Held-out task loss of `params` under `config`.
pub fn evaluate(
    arch: &ArchitectureSpec,
    config: &PipelineConfig,
    params: &ModelParams,
    task: &SyntheticTask,
    train: &TrainConfig,
) -> Result<f64> {
    Objective::new(arch, config, task, train.prediction_latency)?.eval_loss(
        params,
        task,
        train.seed,
        train.eval_sequences,
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct TransferGrid {
    /// Evaluation of each model under the wiring it was trained with.
    pub sequential_own: f64,
    pub parallel_own: f64,
    /// Loss of each weight set under each partition, in input order.
    pub sequential_weights: Vec<f64>,
    pub parallel_weights: Vec<f64>,
}

/// Trains one sequential and one fully parallel model and evaluates both
/// weight sets under every configuration in `partitions`.
pub fn transfer_weights_experiment(
    arch: &ArchitectureSpec,
    partitions: &[PipelineConfig],
    task: &SyntheticTask,
    train: &TrainConfig,
) -> Result<TransferGrid> {
    let seq_cfg = PipelineConfig::sequential(arch);
    let par_cfg = PipelineConfig::fully_parallel(arch)?;
    let seq = train_predictive(arch, &seq_cfg, train, task)?;
    let par = train_predictive(arch, &par_cfg, train, task)?;
    let mut sequential_weights = Vec::with_capacity(partitions.len());
    let mut parallel_weights = Vec::with_capacity(partitions.len());
    for cfg in partitions {
        sequential_weights.push(evaluate(arch, cfg, &seq.params, task, train)?);
        parallel_weights.push(evaluate(arch, cfg, &par.params, task, train)?);
    }
    Ok(TransferGrid {
        sequential_own: seq.final_eval,
        parallel_own: par.final_eval,
        sequential_weights,
        parallel_weights,
    })
}
