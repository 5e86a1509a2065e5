use std::collections::BTreeSet;

use serde::Serialize;

use super::CostModel;
use crate::graph::{Slot, UnrolledGraph};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatencyReport {
    pub names: Vec<String>,
    /// Per node (layers, then head): the fewest frames between an input
    /// frame and any instance of the node that can see it.
    pub per_layer: Vec<i64>,
    /// Head value: the model's information latency.
    pub information_latency: i64,
    pub prediction_latency: usize,
    /// Cost of the longest same-frame chain of subnetwork tasks.
    pub computational_latency: u64,
    /// Largest clock-weighted per-subnetwork cost per frame.
    pub steady_state_period: f64,
}

/// Newest input frame reachable from every node, if any.
fn newest_frames(graph: &UnrolledGraph) -> Vec<Option<i64>> {
    let mut newest: Vec<Option<i64>> = vec![None; graph.nodes.len()];
    for e in &graph.edges {
        // Edges are emitted consumer by consumer in topological order, so
        // every producer is final by the time it is read.
        let v = match e.from {
            Slot::Frame(t) => Some(t),
            Slot::Node(p) => newest[p],
            Slot::Zero => None,
        };
        if let Some(v) = v {
            newest[e.to] = Some(newest[e.to].map_or(v, |x: i64| x.max(v)));
        }
    }
    newest
}

pub fn information_latency(graph: &UnrolledGraph) -> Result<LatencyReport> {
    latency_report(graph, &CostModel::from_topology(&graph.topology))
}

pub fn latency_report(graph: &UnrolledGraph, cost: &CostModel) -> Result<LatencyReport> {
    let depths = graph.topology.nodes.len();
    if cost.per_node.len() != depths {
        return Err(Error::config("cost model does not match the graph"));
    }
    let newest = newest_frames(graph);
    let mut per_layer = vec![None::<i64>; depths];
    for (i, n) in graph.nodes.iter().enumerate() {
        if let Some(f) = newest[i] {
            let lag = n.t - f;
            per_layer[n.depth] = Some(per_layer[n.depth].map_or(lag, |x| x.min(lag)));
        }
    }
    let per_layer: Vec<i64> = per_layer
        .into_iter()
        .enumerate()
        .map(|(d, v)| {
            v.ok_or_else(|| {
                Error::validation(format!(
                    "'{}' never sees an input frame in {} unrolled frames",
                    graph.topology.nodes[d].name, graph.frames
                ))
            })
        })
        .collect::<Result<_>>()?;

    let cfg = &graph.config;
    let subnets = cfg.num_subnets();
    let n = graph.num_layers();
    let ranges = cfg.subnet_layers(n);
    let mut period: f64 = 0.0;
    for (s, r) in ranges.iter().enumerate() {
        let mut c: f64 = r.clone().map(|d| cost.per_node[d] as f64 / cfg.rate_of(d) as f64).sum();
        if s + 1 == subnets {
            c += cost.per_node[n] as f64;
        }
        period = period.max(c);
    }

    // Same-frame task chain at a frame where every clock ticks.
    let h = cfg.hyperperiod() as i64;
    let t0 = graph.start_frame.div_euclid(h) * h + if graph.start_frame.rem_euclid(h) == 0 { 0 } else { h };
    let mut chain = vec![0u64; subnets];
    if t0 < graph.end_frame() {
        for s in 0..subnets {
            let mut upstream = 0;
            for d in ranges[s].clone().chain((s + 1 == subnets).then_some(n)) {
                let Some(id) = graph.node_at(d, t0) else { continue };
                for slot in graph.nodes[id].inputs.iter().flatten() {
                    if let Slot::Node(p) = *slot {
                        let pn = &graph.nodes[p];
                        let ps = cfg.subnet_of(pn.depth);
                        if pn.t == t0 && ps < s {
                            upstream = upstream.max(chain[ps]);
                        }
                    }
                }
            }
            chain[s] = upstream + cost.task_cost(cfg, s, t0);
        }
    }
    Ok(LatencyReport {
        names: graph.topology.nodes.iter().map(|n| n.name.clone()).collect(),
        information_latency: per_layer[n],
        per_layer,
        prediction_latency: cfg.prediction_latency,
        computational_latency: chain.last().copied().unwrap_or(0),
        steady_state_period: period,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReceptiveField {
    pub depth: usize,
    pub t: i64,
    pub visible_frames: BTreeSet<i64>,
}

impl ReceptiveField {
    pub fn newest(&self) -> Option<i64> {
        self.visible_frames.iter().next_back().copied()
    }
}

/// Input frames reachable backwards from node `(depth, t)`.
pub fn temporal_receptive_field(graph: &UnrolledGraph, depth: usize, t: i64) -> Result<ReceptiveField> {
    let root = graph.node_at(depth, t).ok_or_else(|| {
        Error::validation(format!("no node at depth {depth}, frame {t} (clock does not tick or out of range)"))
    })?;
    let mut seen = vec![false; graph.nodes.len()];
    let mut stack = vec![root];
    seen[root] = true;
    let mut visible = BTreeSet::new();
    while let Some(id) = stack.pop() {
        for slot in graph.nodes[id].inputs.iter().flatten() {
            match *slot {
                Slot::Frame(f) => {
                    visible.insert(f);
                }
                Slot::Node(p) if !seen[p] => {
                    seen[p] = true;
                    stack.push(p);
                }
                _ => {}
            }
        }
    }
    Ok(ReceptiveField {
        depth,
        t,
        visible_frames: visible,
    })
}
