//! Static properties of architectures and unrolled graphs.

mod cost;
mod counts;
mod latency;
mod params;
mod report;

pub use cost::{compute_cost_model, CostModel};
pub use counts::{execution_counts, theoretical_speedup, weighted_speedup, BlockCount, ExecutionCounts};
pub use latency::{information_latency, latency_report, temporal_receptive_field, LatencyReport, ReceptiveField};
pub use params::{parameter_count, ParamConvention, ParameterCount};
pub use report::{AnalysisReport, AnalysisRequest};
