use std::sync::Arc;

use crate::graph::{Slot, UnrolledGraph};
use crate::tensor::{apply_layer, ModelParams, Tensor};
use crate::{Error, Result};

/// Resolves node input windows to tensors.
pub struct NodeInputs<'a> {
    graph: &'a UnrolledGraph,
    frames: &'a [Tensor],
    /// Zero tensor per node depth, used for every source of that depth.
    zeros: Vec<Vec<Tensor>>,
}

impl<'a> NodeInputs<'a> {
    pub fn new(graph: &'a UnrolledGraph, frames: &'a [Tensor]) -> Result<Self> {
        let topo = &graph.topology;
        if frames.len() != graph.frames {
            return Err(Error::shape(format!(
                "{} frames supplied for a graph unrolled over {}",
                frames.len(),
                graph.frames
            )));
        }
        for (t, f) in frames.iter().enumerate() {
            if f.shape() != topo.frame_shape {
                return Err(Error::shape(format!(
                    "frame {t} has shape {:?}, architecture expects {:?}",
                    f.shape(),
                    topo.frame_shape
                )));
            }
        }
        let zeros = topo
            .nodes
            .iter()
            .map(|n| n.sources.iter().map(|&s| Tensor::zeros(&topo.source_shape(s))).collect())
            .collect();
        Ok(NodeInputs { graph, frames, zeros })
    }

    /// Input window of `node`, reading produced outputs through `get`.
    pub fn window<'b, F>(&'b self, node: usize, get: F) -> Vec<Vec<&'b Tensor>>
    where
        F: Fn(usize) -> &'b Tensor,
    {
        let n = &self.graph.nodes[node];
        n.inputs
            .iter()
            .map(|pos| {
                pos.iter()
                    .enumerate()
                    .map(|(j, slot)| match *slot {
                        Slot::Frame(t) => &self.frames[(t - self.graph.start_frame) as usize],
                        Slot::Node(p) => get(p),
                        Slot::Zero => &self.zeros[n.depth][j],
                    })
                    .collect()
            })
            .collect()
    }

    pub fn eval<'b, F>(&'b self, node: usize, params: &ModelParams, get: F) -> Result<Tensor>
    where
        F: Fn(usize) -> &'b Tensor,
    {
        let d = self.graph.nodes[node].depth;
        let info = &self.graph.topology.nodes[d];
        let window = self.window(node, get);
        apply_layer(&info.op, info.resize_to, &window, params.layers[d].as_ref())
    }
}

/// Evaluates every node in index order on the calling thread.
pub fn forward(graph: &UnrolledGraph, params: &ModelParams, frames: &[Tensor]) -> Result<Vec<Arc<Tensor>>> {
    check_params(graph, params)?;
    let inputs = NodeInputs::new(graph, frames)?;
    let mut out: Vec<Arc<Tensor>> = Vec::with_capacity(graph.nodes.len());
    for id in 0..graph.nodes.len() {
        let y = {
            let done = &out;
            inputs.eval(id, params, |p| &done[p])?
        };
        out.push(Arc::new(y));
    }
    Ok(out)
}

pub(crate) fn check_params(graph: &UnrolledGraph, params: &ModelParams) -> Result<()> {
    if params.layers.len() != graph.topology.nodes.len() {
        return Err(Error::shape(format!(
            "parameter bundle has {} entries, graph has {} nodes per frame",
            params.layers.len(),
            graph.topology.nodes.len()
        )));
    }
    Ok(())
}
