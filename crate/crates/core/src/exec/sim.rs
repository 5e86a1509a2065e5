use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use super::tasks::TaskGraph;
use super::timeline::{Event, MetricsRow, Timeline};
use crate::analysis::{information_latency, CostModel};
use crate::graph::{
    unroll, ArchitectureSpec, ClockPolicy, PartitionRequest, PipelineConfig, UnrolledGraph, Wiring,
};
use crate::{Error, Result};

/// Block labels spanned by each subnetwork; the head joins the last one.
pub(crate) fn subnet_labels(graph: &UnrolledGraph) -> Vec<String> {
    let topo = &graph.topology;
    let ranges = graph.config.subnet_layers(topo.num_layers());
    let last = ranges.len() - 1;
    ranges
        .into_iter()
        .enumerate()
        .map(|(s, r)| {
            let mut labels: Vec<&str> = Vec::new();
            for d in r.chain((s == last).then_some(topo.head())) {
                let b = topo.nodes[d].block.as_str();
                if labels.last() != Some(&b) {
                    labels.push(b);
                }
            }
            labels.join("+")
        })
        .collect()
}

/// Fills the derived metrics of a timeline from per-task start/finish times.
///
/// The period is measured between two output frames a whole number of clock
/// hyperperiods apart, in the later half of the run and after the pipeline
/// has filled.
pub(crate) fn summarize(tl: &mut Timeline, tg: &TaskGraph, start: &[f64], finish: &[f64], hyper: u64) {
    let s = tg.subnets;
    let frames = tg.len() / s;
    let out = |t: usize| finish[t * s + s - 1];
    let h = hyper as usize;
    let warm = s.max(frames / 2);
    let (t1, t2) = if frames > warm + h {
        let k = (frames - 1 - warm) / h;
        (frames - 1 - k * h, frames - 1)
    } else {
        (0, frames - 1)
    };
    tl.steady_state_period = if t2 > t1 {
        (out(t2) - out(t1)) / (t2 - t1) as f64
    } else {
        out(t2)
    };
    tl.throughput = if tl.steady_state_period > 0.0 {
        1.0 / tl.steady_state_period
    } else {
        f64::INFINITY
    };
    let lat: f64 = (t1..=t2)
        .map(|t| {
            let first = (0..s).map(|j| start[t * s + j]).fold(f64::INFINITY, f64::min);
            out(t) - first
        })
        .sum();
    tl.latency = lat / (t2 - t1 + 1) as f64;
    tl.makespan = finish.iter().copied().fold(0.0, f64::max);
}

/// Discrete-event list schedule of `graph` on `workers` identical workers.
///
/// Ready tasks are served in (frame, subnetwork) order and go to the
/// lowest-numbered idle worker. Task cost is the sum of its ticking layers.
pub fn simulate_graph(graph: &UnrolledGraph, cost: &CostModel, workers: usize) -> Result<Timeline> {
    if workers == 0 {
        return Err(Error::config("at least one worker is required"));
    }
    if cost.per_node.len() != graph.topology.nodes.len() {
        return Err(Error::config("cost model does not match the architecture"));
    }
    let tg = TaskGraph::new(graph);
    let n = tg.len();
    let labels = subnet_labels(graph);
    let costs: Vec<u64> = (0..n)
        .map(|i| cost.task_cost(&graph.config, tg.subnet(i), tg.frame(i)))
        .collect();
    let mut remaining: Vec<usize> = tg.deps.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| remaining[i] == 0).map(Reverse).collect();
    let mut idle: BTreeSet<usize> = (0..workers).collect();
    let mut running: BinaryHeap<Reverse<(u64, usize, usize)>> = BinaryHeap::new();
    let mut start = vec![0.0; n];
    let mut finish = vec![0.0; n];
    let mut tl = Timeline::new("cost");
    let mut now: u64 = 0;
    let mut done = 0;
    loop {
        while !idle.is_empty() {
            let Some(Reverse(task)) = ready.pop() else { break };
            let w = idle.pop_first().expect("checked nonempty");
            running.push(Reverse((now + costs[task], w, task)));
            start[task] = now as f64;
        }
        let Some(&Reverse((t_end, _, _))) = running.peek() else { break };
        now = t_end;
        while let Some(&Reverse((e, w, task))) = running.peek() {
            if e != now {
                break;
            }
            running.pop();
            idle.insert(w);
            finish[task] = now as f64;
            done += 1;
            tl.events.push(Event {
                worker: w,
                subnet: tg.subnet(task),
                frame: tg.frame(task),
                start: start[task],
                end: now as f64,
                label: labels[tg.subnet(task)].clone(),
            });
            for &succ in &tg.succs[task] {
                remaining[succ] -= 1;
                if remaining[succ] == 0 {
                    ready.push(Reverse(succ));
                }
            }
        }
    }
    debug_assert_eq!(done, n);
    summarize(&mut tl, &tg, &start, &finish, graph.config.hyperperiod());
    Ok(tl)
}

/// Unrolls and simulates `frames` frames.
pub fn simulate_schedule(
    arch: &ArchitectureSpec,
    config: &PipelineConfig,
    cost: &CostModel,
    workers: usize,
    frames: usize,
) -> Result<Timeline> {
    simulate_graph(&unroll(arch, config, frames)?, cost, workers)
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub metrics: MetricsRow,
    pub timeline: Timeline,
}

/// Simulates every (subnetworks, workers) pair. Throughput factors are
/// relative to the sequential unclocked model on one worker.
pub fn sweep(
    arch: &ArchitectureSpec,
    subnets: &[usize],
    workers: &[usize],
    clocks: &ClockPolicy,
    cost: &CostModel,
    frames: usize,
) -> Result<Vec<SweepRow>> {
    let base = cost.total() as f64;
    let clock_name = match clocks {
        ClockPolicy::AllOnes => "none".to_string(),
        ClockPolicy::HalveOnDownsample => "halve".to_string(),
        ClockPolicy::Explicit(r) => r.iter().map(u64::to_string).collect::<Vec<_>>().join(":"),
    };
    let mut rows = Vec::new();
    for &s in subnets {
        let wiring = if s == 1 { Wiring::Sequential } else { Wiring::Parallel };
        let cfg = PipelineConfig::new(arch, PartitionRequest::Subnetworks(s), clocks.clone(), wiring)?;
        let graph = unroll(arch, &cfg, frames)?;
        let info = information_latency(&graph)?.information_latency;
        for &w in workers {
            let tl = simulate_graph(&graph, cost, w)?;
            rows.push(SweepRow {
                metrics: MetricsRow {
                    config: format!("{}-s{s}-w{w}", arch.name),
                    subnetworks: s,
                    clocks: clock_name.clone(),
                    workers: w,
                    throughput_factor: base / tl.steady_state_period,
                    latency: tl.latency,
                    info_latency: info,
                },
                timeline: tl,
            });
        }
    }
    Ok(rows)
}
