use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use super::eval::{check_params, NodeInputs};
use super::sim::{subnet_labels, summarize};
use super::tasks::TaskGraph;
use super::timeline::{Event, Timeline};
use crate::analysis::information_latency;
use crate::graph::{unroll, ArchitectureSpec, PipelineConfig, Slot, UnrolledGraph, Wiring};
use crate::tensor::{ModelParams, Tensor};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct ExecutionResult {
    /// Head output of every frame.
    pub outputs: Vec<Tensor>,
    /// Frames whose output cannot yet depend on any input frame.
    pub warmup_mask: Vec<bool>,
    pub information_latency: i64,
    /// Wall-clock task intervals in microseconds.
    pub timeline: Timeline,
}

/// Runs every frame through all layers before the next frame, on the
/// calling thread. Clock rates are honoured; wiring is forced sequential.
pub fn run_sequential(
    arch: &ArchitectureSpec,
    config: &PipelineConfig,
    frames: &[Tensor],
    params: &ModelParams,
) -> Result<ExecutionResult> {
    let cfg = config.clone().with_wiring(Wiring::Sequential);
    let graph = unroll(arch, &cfg, frames.len().max(1))?;
    execute(&graph, params, frames, None)
}

/// Runs the configured pipeline on a pool of `workers` threads (capped by
/// `PIPEVID_THREADS`). Outputs do not depend on the worker count or on the
/// order in which ready tasks happen to run.
pub fn run_pipelined(
    arch: &ArchitectureSpec,
    config: &PipelineConfig,
    frames: &[Tensor],
    params: &ModelParams,
    workers: usize,
) -> Result<ExecutionResult> {
    if workers == 0 {
        return Err(Error::config("at least one worker is required"));
    }
    let graph = unroll(arch, config, frames.len().max(1))?;
    execute(&graph, params, frames, Some(workers))
}

struct Shared<'a> {
    graph: &'a UnrolledGraph,
    tasks: &'a TaskGraph,
    inputs: NodeInputs<'a>,
    params: &'a ModelParams,
    labels: Vec<String>,
    outputs: Vec<OnceLock<Tensor>>,
    #[cfg_attr(not(feature = "parallel"), allow(dead_code))]
    remaining: Vec<AtomicUsize>,
    failed: AtomicBool,
    error: Mutex<Option<Error>>,
    events: Mutex<Vec<(usize, Event)>>,
    clock: Instant,
}

impl Shared<'_> {
    fn run_task(&self, task: usize, worker: usize) {
        if self.failed.load(Ordering::Acquire) {
            return;
        }
        let begin = self.clock.elapsed().as_secs_f64() * 1e6;
        for &id in &self.tasks.nodes[task] {
            let ready = self.graph.nodes[id]
                .inputs
                .iter()
                .flatten()
                .all(|s| !matches!(*s, Slot::Node(p) if self.outputs[p].get().is_none()));
            if !ready {
                self.fail(Error::shape("a producer output is missing"));
                return;
            }
            let outputs = &self.outputs;
            match self
                .inputs
                .eval(id, self.params, |p| outputs[p].get().expect("checked above"))
            {
                Ok(y) => {
                    let _ = self.outputs[id].set(y);
                }
                Err(e) => {
                    self.fail(e);
                    return;
                }
            }
        }
        let end = self.clock.elapsed().as_secs_f64() * 1e6;
        let subnet = self.tasks.subnet(task);
        self.events.lock().expect("event log poisoned").push((
            task,
            Event {
                worker,
                subnet,
                frame: self.tasks.frame(task),
                start: begin,
                end,
                label: self.labels[subnet].clone(),
            },
        ));
    }

    fn fail(&self, e: Error) {
        self.failed.store(true, Ordering::Release);
        let mut slot = self.error.lock().expect("error slot poisoned");
        slot.get_or_insert(e);
    }
}

#[cfg(feature = "parallel")]
fn drive(shared: &Shared<'_>, workers: usize) -> Result<()> {
    fn launch<'s>(scope: &rayon::Scope<'s>, sh: &'s Shared<'s>, task: usize) {
        scope.spawn(move |scope| {
            sh.run_task(task, rayon::current_thread_index().unwrap_or(0));
            for &succ in &sh.tasks.succs[task] {
                if sh.remaining[succ].fetch_sub(1, Ordering::AcqRel) == 1 {
                    launch(scope, sh, succ);
                }
            }
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
    pool.scope(|scope| {
        for task in 0..shared.tasks.len() {
            if shared.tasks.deps[task].is_empty() {
                launch(scope, shared, task);
            }
        }
    });
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn drive(shared: &Shared<'_>, _workers: usize) -> Result<()> {
    run_in_order(shared);
    Ok(())
}

fn run_in_order(shared: &Shared<'_>) {
    for task in 0..shared.tasks.len() {
        shared.run_task(task, 0);
    }
}

/// Executes an unrolled graph; `None` workers runs tasks in index order on
/// the calling thread.
pub(crate) fn execute(
    graph: &UnrolledGraph,
    params: &ModelParams,
    frames: &[Tensor],
    workers: Option<usize>,
) -> Result<ExecutionResult> {
    check_params(graph, params)?;
    let tasks = TaskGraph::new(graph);
    let shared = Shared {
        graph,
        tasks: &tasks,
        inputs: NodeInputs::new(graph, frames)?,
        params,
        labels: subnet_labels(graph),
        outputs: (0..graph.nodes.len()).map(|_| OnceLock::new()).collect(),
        remaining: tasks.deps.iter().map(|d| AtomicUsize::new(d.len())).collect(),
        failed: AtomicBool::new(false),
        error: Mutex::new(None),
        events: Mutex::new(Vec::new()),
        clock: Instant::now(),
    };
    match workers {
        None => run_in_order(&shared),
        Some(w) => {
            let w = crate::par::thread_cap().map_or(w, |cap| w.min(cap));
            drive(&shared, w)?;
        }
    }
    if let Some(e) = shared.error.into_inner().expect("error slot poisoned") {
        return Err(e);
    }
    let mut outputs_by_node: Vec<Option<Tensor>> = shared.outputs.into_iter().map(OnceLock::into_inner).collect();
    let outputs = graph
        .output_nodes
        .iter()
        .map(|&id| outputs_by_node[id].take().ok_or_else(|| Error::shape("an output was not computed")))
        .collect::<Result<Vec<_>>>()?;
    let mut events = shared.events.into_inner().expect("event log poisoned");
    events.sort_by_key(|(task, _)| *task);
    let mut start = vec![0.0; tasks.len()];
    let mut finish = vec![0.0; tasks.len()];
    for (task, e) in &events {
        start[*task] = e.start;
        finish[*task] = e.end;
    }
    let mut timeline = Timeline::new("us");
    timeline.events = events.into_iter().map(|(_, e)| e).collect();
    summarize(&mut timeline, &tasks, &start, &finish, graph.config.hyperperiod());
    let info = information_latency(graph).map_or(i64::MAX, |r| r.information_latency);
    let warmup_mask = (0..graph.frames as i64).map(|t| t < info).collect();
    Ok(ExecutionResult {
        outputs,
        warmup_mask,
        information_latency: info,
        timeline,
    })
}
