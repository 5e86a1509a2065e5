use std::sync::Arc;

use crate::exec::NodeInputs;
use crate::graph::{Slot, UnrolledGraph};
use crate::tensor::{layer_backward, ModelParams, Tensor};
use crate::{Error, Result};

/// Reverse-mode gradients of a scalar objective through an unrolled graph.
///
/// `outputs` are the forward values of every node and `seeds` the gradient
/// of the objective with respect to selected node outputs. Gradients flow
/// through cross-frame edges and through cached outputs that several
/// instances read. Max pooling sends the gradient to the first maximal tap.
pub fn backward(
    graph: &UnrolledGraph,
    params: &ModelParams,
    frames: &[Tensor],
    outputs: &[Arc<Tensor>],
    seeds: &[(usize, Tensor)],
) -> Result<ModelParams> {
    if outputs.len() != graph.nodes.len() {
        return Err(Error::shape("forward values do not match the graph"));
    }
    let inputs = NodeInputs::new(graph, frames)?;
    let mut grads: Vec<Option<Tensor>> = vec![None; graph.nodes.len()];
    for (node, g) in seeds {
        accumulate(&mut grads[*node], g)?;
    }
    let mut pgrads = params.zeros_like();
    for id in (0..graph.nodes.len()).rev() {
        let Some(g) = grads[id].take() else { continue };
        let node = &graph.nodes[id];
        let info = &graph.topology.nodes[node.depth];
        let window = inputs.window(id, |p| &outputs[p]);
        let back = layer_backward(
            &info.op,
            info.resize_to,
            &window,
            params.layers[node.depth].as_ref(),
            &outputs[id],
            &g,
        )?;
        if let (Some(acc), Some(pg)) = (pgrads.layers[node.depth].as_mut(), back.params) {
            acc.weight.add_assign(&pg.weight)?;
            acc.bias.add_assign(&pg.bias)?;
        }
        for (pos, gpos) in node.inputs.iter().zip(back.inputs) {
            for (slot, gs) in pos.iter().zip(gpos) {
                if let Slot::Node(p) = *slot {
                    accumulate(&mut grads[p], &gs)?;
                }
            }
        }
    }
    Ok(pgrads)
}

fn accumulate(slot: &mut Option<Tensor>, g: &Tensor) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(g),
        None => {
            *slot = Some(g.clone());
            Ok(())
        }
    }
}
