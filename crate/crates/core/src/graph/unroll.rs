use serde::Serialize;

use super::{ArchitectureSpec, PipelineConfig, Source, Topology};
use crate::{Error, Result};

/// One entry of a node's input window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Slot {
    /// Input frame at this time index.
    Frame(i64),
    /// Output of another node (index into [`UnrolledGraph::nodes`]).
    Node(usize),
    /// Before the start of the sequence: a zero tensor.
    Zero,
}

/// A layer instance at depth `depth` (the head is the deepest) and frame `t`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Node {
    pub depth: usize,
    pub t: i64,
    /// Window positions, oldest first; each holds one slot per source.
    pub inputs: Vec<Vec<Slot>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Edge {
    /// A `Frame` or `Node` slot.
    pub from: Slot,
    pub to: usize,
    /// Consumer time minus producer time.
    pub offset: i64,
}

/// Time-expanded dataflow graph of a pipelined network.
#[derive(Clone, Debug)]
pub struct UnrolledGraph {
    pub topology: Topology,
    pub config: PipelineConfig,
    pub start_frame: i64,
    pub frames: usize,
    /// Sorted by `(t, depth)`, which is a topological order.
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    /// Past outputs each depth must retain for its consumers.
    pub state_slots: Vec<usize>,
    /// Head node of every frame.
    pub output_nodes: Vec<usize>,
    pub warnings: Vec<String>,
    index: Vec<Vec<Option<usize>>>,
}

/// Unrolls `arch` under `config` over frames `0..frames`.
pub fn unroll(arch: &ArchitectureSpec, config: &PipelineConfig, frames: usize) -> Result<UnrolledGraph> {
    unroll_from(arch, config, 0, frames)
}

/// Unrolls over frames `start..start + frames`.
pub fn unroll_from(
    arch: &ArchitectureSpec,
    config: &PipelineConfig,
    start: i64,
    frames: usize,
) -> Result<UnrolledGraph> {
    let topo = arch.resolve()?;
    UnrolledGraph::build(topo, config.clone(), start, frames)
}

/// The last `extent` tick times of a clock with `rate` at or before `tau`,
/// oldest first.
pub(crate) fn window_ticks(tau: i64, rate: u64, extent: usize) -> impl Iterator<Item = i64> {
    let r = rate as i64;
    let newest = tau.div_euclid(r) * r;
    (0..extent as i64).rev().map(move |k| newest - k * r)
}

pub(crate) fn ticks(t: i64, rate: u64) -> bool {
    t.rem_euclid(rate as i64) == 0
}

impl UnrolledGraph {
    pub fn build(topology: Topology, config: PipelineConfig, start: i64, frames: usize) -> Result<Self> {
        if frames == 0 {
            return Err(Error::config("cannot unroll over zero frames"));
        }
        config.validate(&topology)?;
        let depths = topology.nodes.len();
        let head = topology.head();
        let end = start + frames as i64;
        let mut warnings = Vec::new();
        for (d, &r) in config.clock_rates.iter().enumerate() {
            if r > frames as u64 {
                warnings.push(format!(
                    "layer '{}' has clock rate {r} above the {frames} unrolled frames and ticks at most once",
                    topology.nodes[d].name
                ));
            }
        }
        let mut index = vec![vec![None; frames]; depths];
        let mut nodes: Vec<Node> = Vec::new();
        let mut edges = Vec::new();
        let mut output_nodes = Vec::with_capacity(frames);
        for t in start..end {
            for d in 0..depths {
                if !ticks(t, config.rate_of(d)) {
                    continue;
                }
                let info = &topology.nodes[d];
                let consumer_subnet = config.subnet_of(d);
                let id = nodes.len();
                let mut inputs = vec![Vec::with_capacity(info.sources.len()); info.extent];
                for &src in &info.sources {
                    let (tau, rate) = match src {
                        Source::Frames => (t - config.read_delay(0, consumer_subnet), 1),
                        Source::Layer(p) => (
                            t - config.read_delay(config.subnet_of(p), consumer_subnet),
                            config.rate_of(p),
                        ),
                        Source::Feedback => (t - 1, 1),
                    };
                    for (k, tick) in window_ticks(tau, rate, info.extent).enumerate() {
                        let slot = if tick < start {
                            Slot::Zero
                        } else {
                            match src {
                                Source::Frames => Slot::Frame(tick),
                                Source::Layer(p) => Slot::Node(
                                    index[p][(tick - start) as usize].expect("producer tick exists"),
                                ),
                                Source::Feedback => Slot::Node(
                                    index[head][(tick - start) as usize].expect("head ticks every frame"),
                                ),
                            }
                        };
                        if slot != Slot::Zero {
                            edges.push(Edge {
                                from: slot,
                                to: id,
                                offset: t - tick,
                            });
                        }
                        inputs[k].push(slot);
                    }
                }
                index[d][(t - start) as usize] = Some(id);
                if d == head {
                    output_nodes.push(id);
                }
                nodes.push(Node { depth: d, t, inputs });
            }
        }
        let mut state_slots = vec![1usize; depths];
        for e in &edges {
            if let Slot::Node(p) = e.from {
                let pd = nodes[p].depth;
                let r = config.rate_of(pd) as i64;
                let t_p = nodes[p].t;
                let t = nodes[e.to].t;
                let held = (t.div_euclid(r) - t_p.div_euclid(r) + 1) as usize;
                state_slots[pd] = state_slots[pd].max(held);
            }
        }
        Ok(UnrolledGraph {
            topology,
            config,
            start_frame: start,
            frames,
            nodes,
            edges,
            state_slots,
            output_nodes,
            warnings,
            index,
        })
    }

    pub fn node_at(&self, depth: usize, t: i64) -> Option<usize> {
        let i = t.checked_sub(self.start_frame)?;
        if i < 0 {
            return None;
        }
        self.index.get(depth)?.get(i as usize).copied().flatten()
    }

    pub fn end_frame(&self) -> i64 {
        self.start_frame + self.frames as i64
    }

    pub fn num_layers(&self) -> usize {
        self.topology.num_layers()
    }

    /// Subnetwork that computes a node.
    pub fn subnet_of_node(&self, node: usize) -> usize {
        self.config.subnet_of(self.nodes[node].depth)
    }

    /// Incoming edges of every node.
    pub fn in_edges(&self) -> Vec<Vec<Edge>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            out[e.to].push(*e);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{ChainBuilder, ClockPolicy, PartitionRequest, Wiring};

    #[test]
    fn window_ticks_align_to_clock() {
        assert_eq!(window_ticks(5, 2, 2).collect::<Vec<_>>(), vec![2, 4]);
        assert_eq!(window_ticks(-1, 2, 1).collect::<Vec<_>>(), vec![-2]);
        assert_eq!(window_ticks(3, 1, 3).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn sequential_chain_has_zero_offsets() {
        let arch = ChainBuilder::new(4).build();
        let g = unroll(&arch, &PipelineConfig::sequential(&arch), 5).unwrap();
        assert!(g.edges.iter().all(|e| e.offset == 0));
        assert_eq!(g.nodes.len(), 5 * 5);
        assert_eq!(g.output_nodes.len(), 5);
    }

    #[test]
    fn slow_clock_warns() {
        let arch = ChainBuilder::new(2).build();
        let cfg = PipelineConfig::new(
            &arch,
            PartitionRequest::Subnetworks(1),
            ClockPolicy::Explicit(vec![1, 8]),
            Wiring::Parallel,
        )
        .unwrap();
        let g = unroll(&arch, &cfg, 4).unwrap();
        assert_eq!(g.warnings.len(), 1);
        assert!(unroll(&arch, &cfg, 0).is_err());
    }
}
