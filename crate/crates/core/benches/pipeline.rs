//! Pipelined execution against the sequential baseline, plus the
//! data-parallel batch gradient. Build with `--no-default-features` to
//! measure the sequential fallback of the same code paths.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pipevid::analysis::compute_cost_model;
use pipevid::exec::{run_pipelined, run_sequential, simulate_schedule};
use pipevid::graph::{load_architecture, ChainBuilder, ClockPolicy, PartitionRequest, PipelineConfig, Wiring};
use pipevid::learn::{Objective, SyntheticTask};
use pipevid::par;
use pipevid::tensor::{ModelParams, Tensor};

fn execution(c: &mut Criterion) {
    let arch = ChainBuilder::new(8).channels(8).size(16, 16).frames(16).build();
    let topo = arch.resolve().unwrap();
    let frames: Vec<Tensor> = (0..16).map(|t| Tensor::uniform(&topo.frame_shape, 0, t)).collect();
    let params = ModelParams::init(&topo.ops(), 0);
    let cfg = PipelineConfig::fully_parallel(&arch).unwrap();

    let mut g = c.benchmark_group("execute");
    g.sample_size(20);
    g.bench_function("sequential", |b| b.iter(|| run_sequential(&arch, &cfg, &frames, &params).unwrap()));
    for workers in [1, 2, 4, 8] {
        g.bench_with_input(BenchmarkId::new("pipelined", workers), &workers, |b, &w| {
            b.iter(|| run_pipelined(&arch, &cfg, &frames, &params, w).unwrap())
        });
    }
    g.finish();
}

fn batch_gradient(c: &mut Criterion) {
    let arch = ChainBuilder::new(4).channels(6).size(8, 8).frames(10).extents(vec![1, 2, 2, 2]).build();
    let cfg = PipelineConfig::fully_parallel(&arch).unwrap();
    let task = SyntheticTask::moving_dot(10, 8);
    let objective = Objective::new(&arch, &cfg, &task, 0).unwrap();
    let params = ModelParams::init(&objective.graph().topology.ops(), 0);
    let batch: Vec<_> = (0..8).map(|i| task.sequence(0, i).unwrap()).collect();

    let mut g = c.benchmark_group("batch_gradient");
    g.sample_size(10);
    g.bench_function("par_map", |b| b.iter(|| objective.batch_gradient(&params, &batch).unwrap()));
    g.bench_function("serial", |b| {
        b.iter(|| par::map_serial(&batch, |seq| objective.evaluate(&params, seq, true).unwrap()))
    });
    g.finish();
}

fn simulation(c: &mut Criterion) {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/pardensenet.json");
    let arch = load_architecture(path).unwrap();
    let cost = compute_cost_model(&arch).unwrap();
    let mut g = c.benchmark_group("simulate_densenet");
    g.sample_size(10);
    for subnets in [1, 14] {
        let wiring = if subnets == 1 { Wiring::Sequential } else { Wiring::Parallel };
        let cfg = PipelineConfig::new(&arch, PartitionRequest::Subnetworks(subnets), ClockPolicy::AllOnes, wiring).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(subnets), &cfg, |b, cfg| {
            b.iter(|| simulate_schedule(&arch, cfg, &cost, 8, 64).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, execution, batch_gradient, simulation);
criterion_main!(benches);
