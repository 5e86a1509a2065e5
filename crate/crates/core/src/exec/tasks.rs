use crate::graph::{Slot, UnrolledGraph};

/// Dependency graph of (subnetwork, frame) tasks.
///
/// Task `i` covers subnetwork `i % subnets` at frame `start + i / subnets`,
/// so index order is (frame, subnetwork) order and is topological.
#[derive(Clone, Debug)]
pub struct TaskGraph {
    pub subnets: usize,
    pub start_frame: i64,
    /// Node indices of every task, in depth order.
    pub nodes: Vec<Vec<usize>>,
    pub deps: Vec<Vec<usize>>,
    pub succs: Vec<Vec<usize>>,
}

impl TaskGraph {
    pub fn new(graph: &UnrolledGraph) -> Self {
        let subnets = graph.config.num_subnets();
        let n = subnets * graph.frames;
        let task_of = |node: usize| {
            let nd = &graph.nodes[node];
            (nd.t - graph.start_frame) as usize * subnets + graph.config.subnet_of(nd.depth)
        };
        let mut nodes = vec![Vec::new(); n];
        for id in 0..graph.nodes.len() {
            nodes[task_of(id)].push(id);
        }
        let mut deps: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (task, members) in nodes.iter().enumerate() {
            let d = &mut deps[task];
            if task >= subnets {
                d.push(task - subnets);
            }
            for &id in members {
                for slot in graph.nodes[id].inputs.iter().flatten() {
                    if let Slot::Node(p) = *slot {
                        let pt = task_of(p);
                        if pt != task {
                            d.push(pt);
                        }
                    }
                }
            }
            d.sort_unstable();
            d.dedup();
        }
        let mut succs = vec![Vec::new(); n];
        for (task, d) in deps.iter().enumerate() {
            for &p in d {
                succs[p].push(task);
            }
        }
        TaskGraph {
            subnets,
            start_frame: graph.start_frame,
            nodes,
            deps,
            succs,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn subnet(&self, task: usize) -> usize {
        task % self.subnets
    }

    pub fn frame(&self, task: usize) -> i64 {
        self.start_frame + (task / self.subnets) as i64
    }

    pub fn task(&self, subnet: usize, frame: i64) -> usize {
        (frame - self.start_frame) as usize * self.subnets + subnet
    }
}
