//! Running unrolled graphs and simulating their schedules.
//!
//! Work is split into tasks, one per (subnetwork, frame). A task runs the
//! subnetwork's ticking layers in depth order and depends on the tasks that
//! produce its inputs and on the same subnetwork's previous frame, so every
//! subnetwork processes frames online and in order.

mod eval;
mod run;
mod sim;
mod tasks;
mod timeline;

pub use eval::{forward, NodeInputs};
pub use run::{run_pipelined, run_sequential, ExecutionResult};
pub use sim::{simulate_graph, simulate_schedule, sweep, SweepRow};
pub use tasks::TaskGraph;
pub(crate) use timeline::csv_error;
pub use timeline::{emit_trace, trace_json, write_metrics_csv, Event, MetricsRow, Timeline};
