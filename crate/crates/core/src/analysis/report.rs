use std::fmt::Write as _;

use serde::Serialize;

use super::{
    compute_cost_model, execution_counts, information_latency, parameter_count, theoretical_speedup,
    weighted_speedup, ExecutionCounts, LatencyReport, ParamConvention, ParameterCount,
};
use crate::graph::{unroll, ArchitectureSpec, PipelineConfig};
use crate::Result;

const MAX_SPAN: usize = 1 << 14;

/// What `analyze` should compute.
#[derive(Clone, Debug)]
pub struct AnalysisRequest {
    /// Frames for execution counts and speedups.
    pub count_frames: usize,
    pub conventions: Vec<ParamConvention>,
}

impl Default for AnalysisRequest {
    fn default() -> Self {
        AnalysisRequest {
            count_frames: 16,
            conventions: ParamConvention::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub architecture: String,
    pub layers: usize,
    pub units: usize,
    pub labelled_units: usize,
    pub subnetworks: usize,
    pub latency: LatencyReport,
    pub state_slots: Vec<usize>,
    pub counts: ExecutionCounts,
    pub unclocked_executions: u64,
    pub clocked_executions: u64,
    pub theoretical_speedup: f64,
    pub weighted_speedup: f64,
    pub parameters: Vec<ParameterCount>,
    pub total_macs: u64,
    pub warnings: Vec<String>,
}

impl AnalysisReport {
    pub fn build(arch: &ArchitectureSpec, config: &PipelineConfig, req: &AnalysisRequest) -> Result<Self> {
        let topo = arch.resolve()?;
        config.validate(&topo)?;
        // Grow the unrolled window until every node sees some input frame.
        let mut span = (config.num_subnets() + 2) * config.hyperperiod() as usize + 4;
        let (graph, latency) = loop {
            let graph = unroll(arch, config, span)?;
            match information_latency(&graph) {
                Ok(l) => break (graph, l),
                Err(_) if span < MAX_SPAN => span *= 2,
                Err(e) => return Err(e),
            }
        };
        let cost = compute_cost_model(arch)?;
        let counts = execution_counts(arch, config, req.count_frames)?;
        let unclocked = PipelineConfig {
            clock_rates: vec![1; arch.layers.len()],
            ..config.clone()
        };
        let unclocked_executions = execution_counts(arch, &unclocked, req.count_frames)?.headline();
        Ok(AnalysisReport {
            architecture: arch.name.clone(),
            layers: topo.num_layers(),
            units: topo.units.len(),
            labelled_units: topo.labelled_units().count(),
            subnetworks: config.num_subnets(),
            state_slots: graph.state_slots.clone(),
            clocked_executions: counts.headline(),
            unclocked_executions,
            theoretical_speedup: theoretical_speedup(arch, config, req.count_frames)?,
            weighted_speedup: weighted_speedup(arch, config, &cost, req.count_frames)?,
            counts,
            parameters: req
                .conventions
                .iter()
                .map(|&c| parameter_count(arch, c))
                .collect::<Result<_>>()?,
            total_macs: cost.total(),
            latency,
            warnings: graph.warnings,
        })
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let w = &mut s;
        let _ = writeln!(w, "architecture          {}", self.architecture);
        let _ = writeln!(w, "layers                {}", self.layers);
        let _ = writeln!(w, "partition units       {} ({} labelled)", self.units, self.labelled_units);
        let _ = writeln!(w, "subnetworks           {}", self.subnetworks);
        let _ = writeln!(w, "information latency   {} frames", self.latency.information_latency);
        let _ = writeln!(w, "prediction latency    {} frames", self.latency.prediction_latency);
        let _ = writeln!(w, "computational latency {} MACs", self.latency.computational_latency);
        let _ = writeln!(w, "steady-state period   {:.0} MACs/frame", self.latency.steady_state_period);
        let _ = writeln!(
            w,
            "executions ({} frames) {} unclocked, {} clocked",
            self.counts.frames, self.unclocked_executions, self.clocked_executions
        );
        let _ = writeln!(w, "theoretical speedup   {:.2}", self.theoretical_speedup);
        let _ = writeln!(w, "cost-weighted speedup {:.2}", self.weighted_speedup);
        let _ = writeln!(w, "total MACs per frame  {}", self.total_macs);
        for p in &self.parameters {
            let _ = writeln!(w, "parameters {:<16} {}", p.convention.name(), p.total);
        }
        let _ = writeln!(w, "\n{:<16} {:>12} {:>10}", "block", "layer execs", "unit execs");
        for b in &self.counts.per_block {
            let _ = writeln!(w, "{:<16} {:>12} {:>10}", b.block, b.layer_executions, b.unit_executions);
        }
        for warning in &self.warnings {
            let _ = writeln!(w, "warning: {warning}");
        }
        s
    }
}
