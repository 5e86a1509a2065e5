use serde::{Deserialize, Serialize};

use crate::graph::ArchitectureSpec;
use crate::tensor::Op;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamConvention {
    /// Kernel weights only.
    WeightsOnly,
    /// Kernel weights plus one bias per output channel.
    WithBias,
    /// Kernel weights plus a scale and offset per output channel of every
    /// layer before the head; the head keeps a bias.
    WithBatchNorm,
}

impl ParamConvention {
    pub const ALL: [ParamConvention; 3] = [
        ParamConvention::WeightsOnly,
        ParamConvention::WithBias,
        ParamConvention::WithBatchNorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamConvention::WeightsOnly => "weights-only",
            ParamConvention::WithBias => "with-bias",
            ParamConvention::WithBatchNorm => "with-batch-norm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParameterCount {
    pub convention: ParamConvention,
    pub per_layer: Vec<(String, u64)>,
    pub total: u64,
}

pub fn parameter_count(arch: &ArchitectureSpec, convention: ParamConvention) -> Result<ParameterCount> {
    let topo = arch.resolve()?;
    let head = topo.head();
    let per_layer: Vec<(String, u64)> = topo
        .nodes
        .iter()
        .enumerate()
        .filter_map(|(d, node)| {
            let (wshape, outs) = node.op.param_shapes()?;
            let weights: u64 = wshape.iter().map(|&x| x as u64).product();
            let outs = outs as u64;
            let extra = match convention {
                ParamConvention::WeightsOnly => 0,
                ParamConvention::WithBias => outs,
                ParamConvention::WithBatchNorm if d == head => outs,
                ParamConvention::WithBatchNorm => match node.op {
                    Op::Conv { .. } => 2 * outs,
                    _ => outs,
                },
            };
            Some((node.name.clone(), weights + extra))
        })
        .collect();
    Ok(ParameterCount {
        convention,
        total: per_layer.iter().map(|(_, c)| c).sum(),
        per_layer,
    })
}
