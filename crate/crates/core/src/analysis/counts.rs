use serde::Serialize;

use super::CostModel;
use crate::graph::{ticks, ArchitectureSpec, PipelineConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockCount {
    pub block: String,
    pub layer_executions: u64,
    /// Executions of labelled units whose first layer is in this block.
    pub unit_executions: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExecutionCounts {
    pub frames: usize,
    pub per_layer: Vec<u64>,
    /// A unit executes on a frame when any of its layers ticks.
    pub per_unit: Vec<u64>,
    pub per_block: Vec<BlockCount>,
    pub layer_total: u64,
    /// Executions of labelled units (miniblocks, inception blocks).
    pub unit_total: u64,
    pub labelled_units: usize,
}

/// Ticks of every layer, unit and block over frames `0..frames`.
pub fn execution_counts(arch: &ArchitectureSpec, config: &PipelineConfig, frames: usize) -> Result<ExecutionCounts> {
    let topo = arch.resolve()?;
    config.validate(&topo)?;
    let n = topo.num_layers();
    let fired = |d: usize| (0..frames as i64).filter(|&t| ticks(t, config.rate_of(d))).count() as u64;
    let per_layer: Vec<u64> = (0..n).map(fired).collect();
    let per_unit: Vec<u64> = topo
        .units
        .iter()
        .map(|u| {
            (0..frames as i64)
                .filter(|&t| u.layers.clone().any(|d| ticks(t, config.rate_of(d))))
                .count() as u64
        })
        .collect();
    let mut per_block: Vec<BlockCount> = Vec::new();
    for (block, range) in arch.blocks() {
        let layer_executions = range.clone().map(|d| per_layer[d]).sum();
        let unit_executions = topo
            .units
            .iter()
            .zip(&per_unit)
            .filter(|(u, _)| u.label.is_some() && range.contains(&u.layers.start))
            .map(|(_, c)| c)
            .sum();
        per_block.push(BlockCount {
            block,
            layer_executions,
            unit_executions,
        });
    }
    let unit_total = topo
        .units
        .iter()
        .zip(&per_unit)
        .filter(|(u, _)| u.label.is_some())
        .map(|(_, c)| c)
        .sum();
    Ok(ExecutionCounts {
        frames,
        layer_total: per_layer.iter().sum(),
        per_layer,
        per_unit,
        per_block,
        unit_total,
        labelled_units: topo.labelled_units().count(),
    })
}

impl ExecutionCounts {
    /// Labelled-unit total, or the layer total when no unit is labelled.
    pub fn headline(&self) -> u64 {
        if self.labelled_units > 0 {
            self.unit_total
        } else {
            self.layer_total
        }
    }
}

/// Unclocked over clocked executions, every unit costing the same.
pub fn theoretical_speedup(arch: &ArchitectureSpec, config: &PipelineConfig, frames: usize) -> Result<f64> {
    let unclocked = PipelineConfig {
        clock_rates: vec![1; arch.layers.len()],
        ..config.clone()
    };
    let base = execution_counts(arch, &unclocked, frames)?.headline();
    let clocked = execution_counts(arch, config, frames)?.headline();
    if clocked == 0 || base == 0 {
        return Err(Error::config("speedup needs at least one execution"));
    }
    Ok(base as f64 / clocked as f64)
}

/// Cost-weighted speedup over all nodes, the head included.
pub fn weighted_speedup(
    arch: &ArchitectureSpec,
    config: &PipelineConfig,
    cost: &CostModel,
    frames: usize,
) -> Result<f64> {
    let counts = execution_counts(arch, config, frames)?;
    let n = counts.per_layer.len();
    if cost.per_node.len() != n + 1 {
        return Err(Error::config("cost model does not match the architecture"));
    }
    let head = cost.per_node[n] as u128 * frames as u128;
    let base: u128 = cost.per_node[..n].iter().map(|&c| c as u128 * frames as u128).sum::<u128>() + head;
    let clocked: u128 = cost.per_node[..n]
        .iter()
        .zip(&counts.per_layer)
        .map(|(&c, &k)| c as u128 * k as u128)
        .sum::<u128>()
        + head;
    if clocked == 0 {
        return Err(Error::config("clocked configuration has zero cost"));
    }
    Ok(base as f64 / clocked as f64)
}
