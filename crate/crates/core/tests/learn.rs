use pipevid::graph::{ChainBuilder, ClockPolicy, PartitionRequest, PipelineConfig, Wiring};
use pipevid::learn::{
    backward, sgd_momentum_step, train_distilled, train_predictive, Objective, Reduction, SyntheticTask,
    TrainConfig,
};
use pipevid::exec::forward;
use pipevid::tensor::{Loss, ModelParams, Tensor};
use pipevid::graph::unroll;

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
/// Gradients below this magnitude are compared absolutely.
const FLOOR: f64 = 1e-4;

fn small_task(length: usize) -> SyntheticTask {
    SyntheticTask {
        noise: 0.05,
        ..SyntheticTask::moving_dot(length, 4)
    }
}

fn wirings() -> Vec<(&'static str, pipevid::graph::ArchitectureSpec, PipelineConfig)> {
    let base = ChainBuilder::new(4).size(4, 4).frames(7).extent(1, 2).extent(3, 2);
    let seq_arch = base.clone().build();
    let seq = PipelineConfig::sequential(&seq_arch);
    let clocked = PipelineConfig::new(
        &seq_arch,
        PartitionRequest::Subnetworks(2),
        ClockPolicy::AllOnes,
        Wiring::Parallel,
    )
    .unwrap()
    .with_clocks(vec![1, 1, 2, 2]);
    let fb_arch = base.feedback(1).build();
    let fb = PipelineConfig::fully_parallel(&fb_arch).unwrap();
    vec![("sequential", seq_arch.clone(), seq), ("clocked", seq_arch, clocked), ("feedback", fb_arch, fb)]
}

fn check_gradients(objective: &Objective<'_>, params: &ModelParams, task: &SyntheticTask, seed: u64, what: &str) {
    let seq = task.sequence(seed, 0).unwrap();
    let (_, grads) = objective.evaluate(params, &seq, true).unwrap();
    let grads = grads.unwrap();
    let loss = |p: &ModelParams| objective.evaluate(p, &seq, false).unwrap().0.total;
    let mut probe = params.clone();
    let analytic: Vec<f64> = grads.tensors().flat_map(|t| t.data().to_vec()).collect();
    let count = analytic.len();
    let mut k = 0;
    for ti in 0..probe.tensors().count() {
        let len = probe.tensors().nth(ti).unwrap().len();
        for i in 0..len {
            let orig = probe.tensors().nth(ti).unwrap().data()[i];
            probe.tensors_mut().nth(ti).unwrap().data_mut()[i] = orig + H;
            let up = loss(&probe);
            probe.tensors_mut().nth(ti).unwrap().data_mut()[i] = orig - H;
            let down = loss(&probe);
            probe.tensors_mut().nth(ti).unwrap().data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * H);
            let a = analytic[k];
            let scale = a.abs().max(numeric.abs()).max(FLOOR);
            assert!(
                (a - numeric).abs() <= REL_TOL * scale,
                "{what}, seed {seed}: parameter {k} analytic {a} numeric {numeric}"
            );
            k += 1;
        }
    }
    assert_eq!(k, count);
}

#[test]
fn gradients_match_finite_differences() {
    let task = small_task(7);
    for (name, arch, cfg) in wirings() {
        let objective = Objective::new(&arch, &cfg, &task, 0).unwrap();
        for seed in 0..5 {
            let params = ModelParams::init(&objective.graph().topology.ops(), seed);
            check_gradients(&objective, &params, &task, seed, name);
        }
    }
}

#[test]
fn distillation_gradients_match_finite_differences() {
    let task = small_task(7);
    let (_, arch, cfg) = wirings().remove(1);
    let ops = arch.resolve().unwrap().ops();
    let teacher = ModelParams::init(&ops, 100);
    let objective = Objective::new(&arch, &cfg, &task, 1)
        .unwrap()
        .with_teacher(&teacher, vec![1, 3], 0.7, Reduction::Mean)
        .unwrap();
    for seed in 0..5 {
        let params = ModelParams::init(&ops, seed);
        check_gradients(&objective, &params, &task, seed, "distilled");
    }
}

#[test]
fn linear_chain_squared_loss_matches_closed_form() {
    // y = w2 · (w1 · x + b1) + b2 on one pixel, one channel, one frame.
    let arch = ChainBuilder::new(1)
        .size(1, 1)
        .frames(1)
        .kernel(1)
        .channels(1)
        .activation(None)
        .build();
    let cfg = PipelineConfig::sequential(&arch);
    let graph = unroll(&arch, &cfg, 1).unwrap();
    let mut params = ModelParams::init(&graph.topology.ops(), 0);
    let (w1, b1, w2, b2, x, target) = (0.5, 0.1, -1.5, 0.2, 2.0, 0.3);
    for (layer, (w, b)) in params.layers.iter_mut().zip([(w1, b1), (w2, b2)]) {
        let p = layer.as_mut().unwrap();
        p.weight.data_mut()[0] = w;
        p.bias.data_mut()[0] = b;
    }
    let frames = [Tensor::full(&[1, 1, 1], x)];
    let out = forward(&graph, &params, &frames).unwrap();
    let head = graph.output_nodes[0];
    let (_, g) = Loss::SquaredError
        .eval(&out[head], &Tensor::full(&[1, 1, 1], target))
        .unwrap();
    let grads = backward(&graph, &params, &frames, &out, &[(head, g)]).unwrap();
    let h = w1 * x + b1;
    let r = 2.0 * (w2 * h + b2 - target);
    let expect = [r * w2 * x, r * w2, r * h, r];
    let got: Vec<f64> = grads.tensors().map(|t| t.data()[0]).collect();
    for (a, b) in got.iter().zip(expect) {
        assert!((a - b).abs() < 1e-12, "{got:?} vs {expect:?}");
    }
}

#[test]
fn perfect_fit_gives_zero_gradient() {
    let arch = ChainBuilder::new(2).size(3, 3).frames(3).build();
    let cfg = PipelineConfig::sequential(&arch);
    let graph = unroll(&arch, &cfg, 3).unwrap();
    let params = ModelParams::init(&graph.topology.ops(), 4);
    let frames: Vec<Tensor> = (0..3).map(|t| Tensor::from_fn(&[1, 3, 3], |i| (i + t) as f64 * 0.1)).collect();
    let out = forward(&graph, &params, &frames).unwrap();
    let seeds: Vec<(usize, Tensor)> = graph
        .output_nodes
        .iter()
        .map(|&n| {
            let (v, g) = Loss::SquaredError.eval(&out[n], &out[n]).unwrap();
            assert_eq!(v, 0.0);
            (n, g)
        })
        .collect();
    let grads = backward(&graph, &params, &frames, &out, &seeds).unwrap();
    assert_eq!(grads.squared_norm(), 0.0);
}

#[test]
fn sgd_two_step_recurrence() {
    let arch = ChainBuilder::new(1).size(2, 2).build();
    let ops = arch.resolve().unwrap().ops();
    let mut params = ModelParams::init(&ops, 0);
    let start = params.clone();
    let mut g = params.clone();
    for t in g.tensors_mut() {
        t.data_mut().fill(0.25);
    }
    let mut v = params.zeros_like();
    sgd_momentum_step(&mut params, &g, &mut v, 1.0, 0.9).unwrap();
    sgd_momentum_step(&mut params, &g, &mut v, 1.0, 0.9).unwrap();
    for (p, s) in params.tensors().zip(start.tensors()) {
        for (a, b) in p.data().iter().zip(s.data()) {
            assert!((a - (b - 2.9 * 0.25)).abs() < 1e-12);
        }
    }
}

fn quick_config(seed: u64) -> TrainConfig {
    TrainConfig {
        steps: 6,
        batch: 3,
        eval_sequences: 3,
        eval_every: 3,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic() {
    let arch = ChainBuilder::new(3).size(5, 5).frames(6).extent(1, 2).build();
    let cfg = PipelineConfig::fully_parallel(&arch).unwrap();
    let task = SyntheticTask::moving_dot(6, 5);
    let a = train_predictive(&arch, &cfg, &quick_config(3), &task).unwrap();
    let b = train_predictive(&arch, &cfg, &quick_config(3), &task).unwrap();
    assert_eq!(a.curve.len(), 6);
    for (x, y) in a.curve.iter().zip(&b.curve) {
        assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
        assert_eq!(x.eval_loss.map(f64::to_bits), y.eval_loss.map(f64::to_bits));
    }
    assert!(a.params.bitwise_eq(&b.params));
}

#[test]
fn zero_lambda_distillation_is_plain_training() {
    let arch = ChainBuilder::new(3).size(5, 5).frames(6).build();
    let cfg = PipelineConfig::fully_parallel(&arch).unwrap();
    let task = SyntheticTask::moving_dot(6, 5);
    let teacher = ModelParams::init(&arch.resolve().unwrap().ops(), 77);
    let train = quick_config(1);
    let plain = train_predictive(&arch, &cfg, &train, &task).unwrap();
    let distilled = train_distilled(&arch, &cfg, &train, &task, &teacher).unwrap();
    for (x, y) in plain.curve.iter().zip(&distilled.curve) {
        assert_eq!(x.train_loss.to_bits(), y.train_loss.to_bits());
        assert_eq!(y.distill_loss, 0.0);
    }
    assert!(plain.params.bitwise_eq(&distilled.params));
}

#[test]
fn short_sequences_rejected() {
    let arch = ChainBuilder::new(4).size(4, 4).frames(5).build();
    let cfg = PipelineConfig::fully_parallel(&arch).unwrap();
    // Information latency 3 plus prediction latency 2 needs six frames.
    let task = SyntheticTask::moving_dot(5, 4);
    assert!(Objective::new(&arch, &cfg, &task, 1).is_ok());
    let err = Objective::new(&arch, &cfg, &task, 2).err().unwrap();
    assert!(err.to_string().contains("too short"), "{err}");
}

#[test]
fn invalid_train_configs_rejected() {
    let arch = ChainBuilder::new(2).size(4, 4).build();
    let cfg = PipelineConfig::sequential(&arch);
    let task = SyntheticTask::moving_dot(4, 4);
    for bad in [
        TrainConfig { momentum: 1.0, ..quick_config(0) },
        TrainConfig { lambda: -1.0, ..quick_config(0) },
        TrainConfig { batch: 0, ..quick_config(0) },
    ] {
        assert!(train_predictive(&arch, &cfg, &bad, &task).is_err());
    }
}
