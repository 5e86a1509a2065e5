//! Architecture descriptions, pipeline configuration and time unrolling.

mod builder;
mod config;
mod interp;
mod parse;
mod spec;
mod transform;
mod unroll;

pub use builder::ChainBuilder;
pub use config::{
    assign_clock_rates, partition_subnetworks, ClockPolicy, PartitionRequest, PipelineConfig, Wiring,
};
pub use interp::{reference_step_interpreter, InterpreterRun};
pub use parse::{load_architecture, parse_architecture, to_json};
pub use spec::{
    ArchitectureSpec, FeedbackSpec, HeadKind, HeadSpec, LayerKind, LayerSpec, ResolvedNode, Source, Topology,
    Unit, INPUT,
};
pub use transform::{add_feedback, default_temporal_extents, prepare, temporalize};
pub use unroll::{unroll, unroll_from, Edge, Node, Slot, UnrolledGraph};
pub(crate) use unroll::ticks;
