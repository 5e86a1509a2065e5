use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use pipevid::analysis::{compute_cost_model, information_latency, AnalysisReport, AnalysisRequest};
use pipevid::exec::{emit_trace, run_pipelined, run_sequential, simulate_schedule, sweep, write_metrics_csv, MetricsRow};
use pipevid::graph::{
    load_architecture, unroll, ArchitectureSpec, ChainBuilder, ClockPolicy, PartitionRequest, PipelineConfig,
    Wiring,
};
use pipevid::learn::{
    load_checkpoint, save_checkpoint, train_distilled, train_predictive, transfer_weights_experiment, write_loss_csv,
    Reduction, SyntheticTask, TrainConfig, TrainOutcome,
};
use pipevid::tensor::{read_tensor_stream, write_tensor_stream, Loss, ModelParams, Tensor};
use serde_json::json;

use crate::args::{
    AnalyzeArgs, BenchArgs, Clocks, ModelArgs, OutArgs, RunArgs, SimulateArgs, TaskArg, TrainArgs, WiringArg,
};
use crate::failure::Failure;
use crate::manifest::{hash_inputs, prepare_output, write_manifest, RunManifest};

/// Maximum absolute difference accepted by `run --check-shift`.
const SHIFT_TOLERANCE: f64 = 1e-9;

type CmdResult = Result<(), Failure>;

/// The validated inputs of a command.
struct Setup {
    arch: ArchitectureSpec,
    config: PipelineConfig,
    inputs: Vec<PathBuf>,
}

fn load_arch(path: &Path) -> Result<ArchitectureSpec, Failure> {
    load_architecture(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn required_arch(m: &ModelArgs) -> Result<&Path, Failure> {
    m.arch
        .as_deref()
        .ok_or_else(|| Failure::Usage("--arch is required for this command".into()))
}

fn clock_policy(arch: &ArchitectureSpec, clocks: &Clocks) -> Result<ClockPolicy, Failure> {
    Ok(match clocks {
        Clocks::None => ClockPolicy::AllOnes,
        Clocks::Halve => ClockPolicy::HalveOnDownsample,
        Clocks::List(r) if r.len() == arch.layers.len() => ClockPolicy::Explicit(r.clone()),
        Clocks::List(r) => {
            let blocks = arch.blocks();
            if r.len() != blocks.len() {
                return Err(Failure::Usage(format!(
                    "{} clock rates match neither the {} layers nor the {} blocks",
                    r.len(),
                    arch.layers.len(),
                    blocks.len()
                )));
            }
            let mut rates = vec![0; arch.layers.len()];
            for ((_, range), &rate) in blocks.iter().zip(r) {
                rates[range.clone()].fill(rate);
            }
            ClockPolicy::Explicit(rates)
        }
    })
}

fn build_config(arch: &ArchitectureSpec, m: &ModelArgs, inputs: &mut Vec<PathBuf>) -> Result<PipelineConfig, Failure> {
    let mut config = match &m.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            inputs.push(path.clone());
            serde_json::from_str::<PipelineConfig>(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => {
            if m.subnets == 0 {
                return Err(Failure::Usage("--subnets must be at least 1".into()));
            }
            let wiring = match m.wiring {
                Some(WiringArg::Sequential) => Wiring::Sequential,
                Some(WiringArg::Parallel) => Wiring::Parallel,
                Some(WiringArg::SemiParallel) => Wiring::SemiParallel,
                None if m.subnets == 1 => Wiring::Sequential,
                None => Wiring::Parallel,
            };
            PipelineConfig::new(
                arch,
                PartitionRequest::Subnetworks(m.subnets),
                clock_policy(arch, &m.clocks)?,
                wiring,
            )?
        }
    };
    if m.pred_latency > 0 {
        config.prediction_latency = m.pred_latency;
    }
    config.validate(&arch.resolve()?)?;
    Ok(config)
}

fn setup(m: &ModelArgs) -> Result<Setup, Failure> {
    let path = required_arch(m)?;
    let arch = load_arch(path)?;
    let mut inputs = vec![path.to_path_buf()];
    let config = build_config(&arch, m, &mut inputs)?;
    Ok(Setup { arch, config, inputs })
}

/// Validates the output directory and writes the manifest into it.
fn start_output(
    out: &OutArgs,
    command: &str,
    args: &[String],
    arch_file: Option<&Path>,
    inputs: &[PathBuf],
    overrides: serde_json::Value,
    seed: Option<u64>,
) -> Result<Option<PathBuf>, Failure> {
    let Some(dir) = &out.out else { return Ok(None) };
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let input_hashes = hash_inputs(&refs)?;
    prepare_output(dir, out.force)?;
    let manifest = RunManifest {
        command: command.into(),
        arch_file: arch_file.map(Path::to_path_buf),
        args: args.to_vec(),
        config_overrides: overrides,
        seed,
        output_dir: dir.clone(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        input_hashes,
    };
    write_manifest(dir, &manifest)?;
    Ok(Some(dir.clone()))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn grouped(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

pub fn analyze(a: &AnalyzeArgs, args: &[String]) -> CmdResult {
    let s = setup(&a.model)?;
    let req = AnalysisRequest {
        count_frames: a.frames,
        ..AnalysisRequest::default()
    };
    let report = AnalysisReport::build(&s.arch, &s.config, &req)?;
    let dir = start_output(
        &a.out,
        "analyze",
        args,
        a.model.arch.as_deref(),
        &s.inputs,
        json!({ "config": s.config, "frames": a.frames }),
        None,
    )?;
    let mut text = String::new();
    if a.params {
        for p in &report.parameters {
            let _ = writeln!(text, "parameters {:<16} {}", p.convention.name(), grouped(p.total));
        }
    } else {
        text = report.to_table();
    }
    if let Some(dir) = dir {
        write_json(&dir.join("report.json"), &report)?;
        fs::write(dir.join("report.txt"), &text)?;
    }
    print!("{text}");
    Ok(())
}

pub fn simulate(a: &SimulateArgs, args: &[String]) -> CmdResult {
    let s = setup(&a.model)?;
    let workers: Vec<usize> = if a.sweep { a.worker_grid.0.clone() } else { vec![a.workers] };
    if workers.contains(&0) {
        return Err(Failure::Usage("worker counts must be at least 1".into()));
    }
    if a.sweep && (a.subnet_grid.0.is_empty() || a.subnet_grid.0.contains(&0)) {
        return Err(Failure::Usage("subnetwork counts must be at least 1".into()));
    }
    if a.frames == 0 {
        return Err(Failure::Usage("--frames must be at least 1".into()));
    }
    let cost = compute_cost_model(&s.arch)?;
    let dir = start_output(
        &a.out,
        "simulate",
        args,
        a.model.arch.as_deref(),
        &s.inputs,
        json!({ "config": s.config, "frames": a.frames, "workers": workers, "sweep": a.sweep,
                "subnet_grid": a.subnet_grid.0 }),
        None,
    )?;
    let mut rows: Vec<MetricsRow> = Vec::new();
    if a.sweep {
        let policy = clock_policy(&s.arch, &a.model.clocks)?;
        let grid = sweep(&s.arch, &a.subnet_grid.0, &workers, &policy, &cost, a.frames)?;
        rows.extend(grid.into_iter().map(|r| r.metrics));
    } else {
        let tl = simulate_schedule(&s.arch, &s.config, &cost, a.workers, a.frames)?;
        let graph = unroll(&s.arch, &s.config, a.frames)?;
        let info = information_latency(&graph).map(|r| r.information_latency).unwrap_or(-1);
        rows.push(MetricsRow {
            config: format!("{}-s{}-w{}", s.arch.name, s.config.num_subnets(), a.workers),
            subnetworks: s.config.num_subnets(),
            clocks: clocks_label(&a.model.clocks),
            workers: a.workers,
            throughput_factor: cost.total() as f64 / tl.steady_state_period,
            latency: tl.latency,
            info_latency: info,
        });
        if let Some(dir) = &dir {
            emit_trace(&tl, dir.join("trace.json"))?;
        }
    }
    let mut csv = Vec::new();
    write_metrics_csv(&mut csv, &rows)?;
    if let Some(dir) = &dir {
        fs::write(dir.join("metrics.csv"), &csv)?;
    }
    std::io::stdout().write_all(&csv)?;
    Ok(())
}

fn clocks_label(c: &Clocks) -> String {
    match c {
        Clocks::None => "none".into(),
        Clocks::Halve => "halve".into(),
        Clocks::List(r) => r.iter().map(u64::to_string).collect::<Vec<_>>().join(":"),
    }
}

fn load_params(path: Option<&Path>, arch: &ArchitectureSpec, seed: u64) -> Result<ModelParams, Failure> {
    match path {
        Some(p) => load_checkpoint(p)
            .map(|(_, params)| params)
            .map_err(|e| Failure::Usage(format!("{}: {e}", p.display()))),
        None => Ok(ModelParams::init(&arch.resolve()?.ops(), seed)),
    }
}

pub fn run(a: &RunArgs, args: &[String]) -> CmdResult {
    let mut s = setup(&a.model)?;
    if a.workers == 0 {
        return Err(Failure::Usage("--workers must be at least 1".into()));
    }
    let frames: Vec<Tensor> = match &a.input {
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            s.inputs.push(path.clone());
            read_tensor_stream(BufReader::new(file)).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => {
            if a.frames == 0 {
                return Err(Failure::Usage("--frames must be at least 1".into()));
            }
            let shape = s.arch.resolve()?.frame_shape;
            (0..a.frames as u64).map(|t| Tensor::uniform(&shape, a.seed, t)).collect()
        }
    };
    if let Some(p) = &a.params {
        s.inputs.push(p.clone());
    }
    let params = load_params(a.params.as_deref(), &s.arch, a.seed)?;
    let dir = start_output(
        &a.out,
        "run",
        args,
        a.model.arch.as_deref(),
        &s.inputs,
        json!({ "config": s.config, "frames": frames.len(), "workers": a.workers }),
        Some(a.seed),
    )?;
    let piped = run_pipelined(&s.arch, &s.config, &frames, &params, a.workers)?;
    let seq = run_sequential(&s.arch, &s.config, &frames, &params)?;
    let shift = (piped.information_latency - seq.information_latency).max(0) as usize;
    let mut max_diff: f64 = 0.0;
    let mut compared = 0;
    for t in shift..frames.len() {
        max_diff = max_diff.max(piped.outputs[t].max_abs_diff(&seq.outputs[t - shift])?);
        compared += 1;
    }
    let pass = max_diff <= SHIFT_TOLERANCE;
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!(
        "shift-equivalence {verdict}: shift = {shift}, {compared} frames compared, max abs diff = {max_diff:e}"
    );
    if let Some(dir) = &dir {
        let file = fs::File::create(dir.join("outputs.bin"))?;
        write_tensor_stream(BufWriter::new(file), &piped.outputs)?;
        write_json(
            &dir.join("result.json"),
            &json!({
                "frames": frames.len(),
                "information_latency": piped.information_latency,
                "warmup_frames": piped.warmup_mask.iter().filter(|&&w| w).count(),
                "shift": shift,
                "max_abs_diff": max_diff,
                "shift_equivalent": pass,
            }),
        )?;
    }
    println!(
        "{} frames, {} workers, information latency {}",
        frames.len(),
        a.workers,
        piped.information_latency
    );
    println!("{line}");
    if a.check_shift && !pass {
        return Err(Failure::Runtime("pipelined outputs are not shifted sequential outputs".into()));
    }
    Ok(())
}

fn train_setup(a: &TrainArgs) -> Result<(Setup, SyntheticTask), Failure> {
    let (arch, mut inputs) = match &a.model.arch {
        Some(p) => (load_arch(p)?, vec![p.clone()]),
        None => {
            if a.depth == 0 || a.size < 2 || a.channels == 0 {
                return Err(Failure::Usage("the built-in model needs depth ≥ 1, size ≥ 2 and channels ≥ 1".into()));
            }
            let mut extents = vec![2; a.depth];
            extents[0] = 1;
            let mut b = ChainBuilder::new(a.depth)
                .channels(a.channels)
                .size(a.size, a.size)
                .frames(a.frames)
                .extents(extents);
            if a.task == TaskArg::Classification {
                b = b.classifier(pipevid::learn::DIRECTION_CLASSES);
            }
            (b.build(), Vec::new())
        }
    };
    let shape = arch.input_shape;
    let mut task = match a.task {
        TaskArg::MovingDot => SyntheticTask::moving_dot(a.frames, shape[1]),
        TaskArg::Classification => SyntheticTask::classification(a.frames, shape[1]),
    };
    task.width = shape[2];
    if shape[3] != 1 {
        return Err(Failure::Usage("synthetic tasks render single-channel frames".into()));
    }
    task.validate()?;
    let config = build_config(&arch, &a.model, &mut inputs)?;
    Ok((Setup { arch, config, inputs }, task))
}

fn train_config(a: &TrainArgs) -> TrainConfig {
    let default_lambda = match a.task {
        TaskArg::MovingDot => 1.0,
        TaskArg::Classification => 100.0,
    };
    TrainConfig {
        learning_rate: a.lr,
        momentum: a.momentum,
        steps: a.steps,
        batch: a.batch,
        prediction_latency: a.model.pred_latency,
        lambda: if a.distill { a.lambda.unwrap_or(default_lambda) } else { 0.0 },
        distill_layers: a.distill_layers.clone().map(|l| l.0).unwrap_or_default(),
        reduction: if a.distill_sum { Reduction::Sum } else { Reduction::Mean },
        seed: a.seed,
        eval_sequences: a.eval_sequences,
        eval_every: a.eval_every,
        clip_norm: a.clip_norm,
    }
}

fn save_outcome(dir: &Path, prefix: &str, arch: &ArchitectureSpec, o: &TrainOutcome, meta: serde_json::Value) -> CmdResult {
    write_loss_csv(&dir.join(format!("{prefix}loss.csv")), &o.curve)?;
    let names: Vec<String> = arch.resolve()?.nodes.iter().map(|n| n.name.clone()).collect();
    save_checkpoint(&dir.join(format!("{prefix}checkpoint")), &names, &o.params, meta)?;
    Ok(())
}

pub fn train(a: &TrainArgs, args: &[String]) -> CmdResult {
    let (s, task) = train_setup(a)?;
    let cfg = train_config(a);
    cfg.validate()?;
    if a.distill && a.transfer {
        return Err(Failure::Usage("--distill and --transfer are separate experiments".into()));
    }
    let dir = start_output(
        &a.out,
        "train",
        args,
        a.model.arch.as_deref(),
        &s.inputs,
        json!({ "config": s.config, "train": cfg, "task": task, "architecture": s.arch }),
        Some(a.seed),
    )?;
    let meta = json!({ "seed": a.seed, "task": task });
    if a.transfer {
        let partitions = a
            .transfer_grid
            .0
            .iter()
            .map(|&n| {
                let wiring = if n == 1 { Wiring::Sequential } else { Wiring::Parallel };
                PipelineConfig::new(&s.arch, PartitionRequest::Subnetworks(n), ClockPolicy::AllOnes, wiring)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let grid = transfer_weights_experiment(&s.arch, &partitions, &task, &cfg)?;
        let mut csv = String::from("subnetworks,sequential_weights,parallel_weights\n");
        for (i, n) in a.transfer_grid.0.iter().enumerate() {
            let _ = writeln!(csv, "{n},{},{}", grid.sequential_weights[i], grid.parallel_weights[i]);
        }
        if let Some(dir) = &dir {
            fs::write(dir.join("transfer.csv"), &csv)?;
            write_json(&dir.join("summary.json"), &grid)?;
        }
        print!("{csv}");
        return Ok(());
    }
    let outcome = if a.distill {
        let teacher_cfg = PipelineConfig::sequential(&s.arch).with_clocks(s.config.clock_rates.clone());
        let teacher_train = TrainConfig {
            lambda: 0.0,
            prediction_latency: 0,
            ..cfg.clone()
        };
        let teacher = train_predictive(&s.arch, &teacher_cfg, &teacher_train, &task)?;
        if let Some(dir) = &dir {
            save_outcome(dir, "teacher_", &s.arch, &teacher, meta.clone())?;
        }
        println!("teacher eval loss {:.6}", teacher.final_eval);
        train_distilled(&s.arch, &s.config, &cfg, &task, &teacher.params)?
    } else {
        train_predictive(&s.arch, &s.config, &cfg, &task)?
    };
    if let Some(dir) = &dir {
        save_outcome(dir, "", &s.arch, &outcome, meta)?;
        write_json(
            &dir.join("summary.json"),
            &json!({
                "initial_eval": outcome.initial_eval,
                "final_eval": outcome.final_eval,
                "steps": cfg.steps,
                "prediction_latency": cfg.prediction_latency,
                "lambda": cfg.lambda,
                "loss": match task.loss { Loss::SoftmaxXent => "softmax_xent", Loss::SquaredError => "squared_error",
                                          Loss::WeightedSigmoidXent { .. } => "weighted_sigmoid_xent" },
            }),
        )?;
    }
    println!("initial eval loss {:.6}", outcome.initial_eval);
    println!("final eval loss {:.6}", outcome.final_eval);
    Ok(())
}

pub fn bench(a: &BenchArgs, args: &[String]) -> CmdResult {
    let s = setup(&a.model)?;
    if a.worker_grid.0.is_empty() || a.worker_grid.0.contains(&0) {
        return Err(Failure::Usage("worker counts must be at least 1".into()));
    }
    if a.frames == 0 || a.repeats == 0 {
        return Err(Failure::Usage("--frames and --repeats must be at least 1".into()));
    }
    let shape = s.arch.resolve()?.frame_shape;
    let frames: Vec<Tensor> = (0..a.frames as u64).map(|t| Tensor::uniform(&shape, a.seed, t)).collect();
    let params = ModelParams::init(&s.arch.resolve()?.ops(), a.seed);
    let dir = start_output(
        &a.out,
        "bench",
        args,
        a.model.arch.as_deref(),
        &s.inputs,
        json!({ "config": s.config, "frames": a.frames, "workers": a.worker_grid.0, "repeats": a.repeats }),
        Some(a.seed),
    )?;
    let time = |f: &dyn Fn() -> pipevid::Result<()>| -> Result<f64, Failure> {
        let mut best = f64::INFINITY;
        for _ in 0..a.repeats {
            let t0 = Instant::now();
            f()?;
            best = best.min(t0.elapsed().as_secs_f64());
        }
        Ok(best)
    };
    let mut csv = String::from("runner,workers,seconds,frames_per_second\n");
    let seq = time(&|| run_sequential(&s.arch, &s.config, &frames, &params).map(|_| ()))?;
    let _ = writeln!(csv, "sequential,1,{seq:.6},{:.2}", a.frames as f64 / seq);
    for &w in &a.worker_grid.0 {
        let t = time(&|| run_pipelined(&s.arch, &s.config, &frames, &params, w).map(|_| ()))?;
        let _ = writeln!(csv, "pipelined,{w},{t:.6},{:.2}", a.frames as f64 / t);
    }
    if let Some(dir) = &dir {
        fs::write(dir.join("bench.csv"), &csv)?;
    }
    print!("{csv}");
    Ok(())
}
