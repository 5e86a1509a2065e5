use super::{ArchitectureSpec, PipelineConfig, Source};
use crate::tensor::{apply_layer, ModelParams, Tensor};
use crate::{Error, Result};

pub struct InterpreterRun {
    /// Head output of every frame.
    pub outputs: Vec<Tensor>,
    /// `(depth, t)` of every layer instance computed, in execution order.
    pub activations: Vec<(usize, i64)>,
}

/// Frame-by-frame reference semantics.
///
/// State starts at zero. At every frame each layer whose clock ticks is
/// recomputed in depth order; a layer that does not tick keeps its previous
/// outputs. A read that crosses subnetwork boundaries takes the producer's
/// outputs as they stood the corresponding number of frames earlier. A layer
/// with temporal extent `e` reads the producer's last `e` computed outputs,
/// padded with zeros on the left.
pub fn reference_step_interpreter(
    arch: &ArchitectureSpec,
    config: &PipelineConfig,
    frames: &[Tensor],
    params: &ModelParams,
) -> Result<InterpreterRun> {
    let topo = arch.resolve()?;
    config.validate(&topo)?;
    if frames.is_empty() {
        return Err(Error::shape("no input frames"));
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
    if params.layers.len() != topo.nodes.len() {
        return Err(Error::shape("parameter bundle does not match the architecture"));
    }
    let head = topo.head();
    // state[d] holds (tick, output) for every computed instance of depth d.
    let mut state: Vec<Vec<(i64, Tensor)>> = vec![Vec::new(); topo.nodes.len()];
    let mut outputs = Vec::with_capacity(frames.len());
    let mut activations = Vec::new();
    for t in 0..frames.len() as i64 {
        for d in 0..topo.nodes.len() {
            let rate = if d == head { 1 } else { config.clock_rates[d] as i64 };
            if t % rate != 0 {
                continue;
            }
            let node = &topo.nodes[d];
            let mine = config.subnet_of(d);
            let mut columns: Vec<Vec<Tensor>> = Vec::with_capacity(node.sources.len());
            for &src in &node.sources {
                let zero = Tensor::zeros(&topo.source_shape(src));
                let history: Vec<&Tensor> = match src {
                    Source::Frames => {
                        let tau = t - config.read_delay(0, mine);
                        frames.iter().take((tau + 1).max(0) as usize).collect()
                    }
                    Source::Layer(p) => {
                        let tau = t - config.read_delay(config.subnet_of(p), mine);
                        state[p].iter().filter(|(s, _)| *s <= tau).map(|(_, x)| x).collect()
                    }
                    Source::Feedback => state[head].iter().filter(|(s, _)| *s < t).map(|(_, x)| x).collect(),
                };
                let e = node.extent;
                let recent = &history[history.len().saturating_sub(e)..];
                let mut column: Vec<Tensor> = vec![zero; e - recent.len()];
                column.extend(recent.iter().map(|&x| x.clone()));
                columns.push(column);
            }
            let window: Vec<Vec<&Tensor>> = (0..node.extent)
                .map(|k| columns.iter().map(|c| &c[k]).collect())
                .collect();
            let y = apply_layer(&node.op, node.resize_to, &window, params.layers[d].as_ref())?;
            state[d].push((t, y));
            activations.push((d, t));
        }
        outputs.push(state[head].last().expect("head ticks every frame").1.clone());
    }
    Ok(InterpreterRun {
        outputs,
        activations,
    })
}
