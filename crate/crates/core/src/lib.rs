//! Pipelined inference engine for layered causal video networks.
//!
//! An [`graph::ArchitectureSpec`] describes an image network layer by layer.
//! A [`graph::PipelineConfig`] splits it into parallel subnetworks and assigns
//! per-layer clock rates. [`graph::unroll`] expands the pair over time into an
//! [`graph::UnrolledGraph`], the object every other module consumes:
//!
//! * [`analysis`] computes latencies, receptive fields, execution counts and
//!   parameter/cost totals,
//! * [`exec`] runs the graph (sequentially or on a worker pool) and simulates
//!   its schedule on a cost model,
//! * [`learn`] trains toy instances with exact reverse-mode gradients.
//!
//! With the default `parallel` feature the worker pool and the data-parallel
//! loops run on rayon; without it everything falls back to a single thread and
//! produces bitwise-identical numbers.

pub mod analysis;
pub mod error;
pub mod exec;
pub mod graph;
pub mod learn;
pub mod par;
pub mod tensor;

pub use error::{Error, Result};
