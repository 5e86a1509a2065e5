use serde::{Deserialize, Serialize};

use crate::graph::{ArchitectureSpec, PipelineConfig, Topology};
use crate::tensor::Op;
use crate::{Error, Result};

/// Cost of one instance of every node (layers in order, head last).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub names: Vec<String>,
    pub per_node: Vec<u64>,
}

/// Multiply-accumulate count of one instance of `op` producing `out_shape`.
fn macs(op: &Op, out_shape: [usize; 3]) -> u64 {
    let [_, h, w] = out_shape;
    match *op {
        Op::Conv {
            in_channels,
            out_channels,
            extent,
            kernel,
            ..
        } => (out_channels * in_channels * extent * kernel.0 * kernel.1 * h * w) as u64,
        Op::Linear {
            in_features,
            out_features,
            ..
        } => (in_features * out_features) as u64,
        Op::Classifier {
            in_channels,
            classes,
        } => (in_channels * classes) as u64,
        Op::Pool { .. } | Op::Concat | Op::Upsample { .. } | Op::Activation(_) => 0,
    }
}

/// MAC counts from propagated shapes. Pooling, concat, resizing and
/// pointwise layers cost nothing.
pub fn compute_cost_model(arch: &ArchitectureSpec) -> Result<CostModel> {
    Ok(CostModel::from_topology(&arch.resolve()?))
}

impl CostModel {
    pub fn from_topology(topo: &Topology) -> Self {
        CostModel {
            names: topo.nodes.iter().map(|n| n.name.clone()).collect(),
            per_node: topo.nodes.iter().map(|n| macs(&n.op, n.out_shape)).collect(),
        }
    }

    /// User-supplied costs, e.g. measured per-layer times.
    pub fn measured(topo: &Topology, per_node: Vec<u64>) -> Result<Self> {
        if per_node.len() != topo.nodes.len() {
            return Err(Error::config(format!(
                "{} costs given for {} nodes (layers plus head)",
                per_node.len(),
                topo.nodes.len()
            )));
        }
        Ok(CostModel {
            names: topo.nodes.iter().map(|n| n.name.clone()).collect(),
            per_node,
        })
    }

    pub fn total(&self) -> u64 {
        self.per_node.iter().sum()
    }

    /// Cost of subnetwork `s` at frame `t`: the layers that tick, plus the
    /// head for the last subnetwork.
    pub fn task_cost(&self, config: &PipelineConfig, s: usize, t: i64) -> u64 {
        let n = self.per_node.len() - 1;
        let layers = config.subnet_layers(n);
        let mut c: u64 = layers[s]
            .clone()
            .filter(|&d| crate::graph::ticks(t, config.rate_of(d)))
            .map(|d| self.per_node[d])
            .sum();
        if s + 1 == layers.len() {
            c += self.per_node[n];
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{HeadKind, HeadSpec, LayerKind, LayerSpec};

    #[test]
    fn pointwise_conv_closed_form() {
        let mut l = LayerSpec::new("c", LayerKind::Conv, [1, 1, 1], [1, 1, 1]);
        l.out_channels = Some(64);
        let arch = ArchitectureSpec {
            name: "one".into(),
            input_shape: [1, 56, 56, 64],
            layers: vec![l],
            skip_edges: vec![],
            head: HeadSpec {
                kind: HeadKind::Classifier,
                inputs: vec!["c".into()],
                kernel: [1, 1, 1],
                out_channels: 2,
                resolution: None,
            },
            feedback: None,
        };
        let cm = compute_cost_model(&arch).unwrap();
        assert_eq!(cm.per_node[0], 64 * 64 * 56 * 56);
        assert_eq!(cm.per_node[1], 64 * 2);
    }
}
