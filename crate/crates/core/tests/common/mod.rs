#![allow(dead_code)]

use pipevid::graph::{
    ArchitectureSpec, ChainBuilder, ClockPolicy, PartitionRequest, PipelineConfig, Wiring,
};
use pipevid::tensor::{ModelParams, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Case {
    pub arch: ArchitectureSpec,
    pub config: PipelineConfig,
    pub frames: Vec<Tensor>,
    pub params: ModelParams,
}

/// Knobs for `random_case`.
#[derive(Clone, Copy)]
pub struct Features {
    pub extents: bool,
    pub clocks: bool,
    pub skips: bool,
    pub feedback: bool,
}

pub const ALL: Features = Features { extents: true, clocks: true, skips: true, feedback: true };
pub const STATELESS: Features = Features { extents: false, clocks: false, skips: false, feedback: false };

/// A small random chain with a random partition and random weights.
pub fn random_case(depth: usize, seed: u64, f: Features) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames_n = rng.gen_range(3..=9);
    let size = rng.gen_range(2..=4);
    let mut b = ChainBuilder::new(depth)
        .channels(rng.gen_range(1..=3))
        .input_channels(rng.gen_range(1..=2))
        .size(size, size)
        .frames(frames_n)
        .kernel(if rng.gen_bool(0.5) { 1 } else { 3 });
    if f.extents {
        b = b.extents((0..depth).map(|_| rng.gen_range(1..=3)).collect());
    }
    if f.skips && depth >= 3 && rng.gen_bool(0.6) {
        let from = rng.gen_range(0..depth - 2);
        let to = rng.gen_range(from + 2..depth);
        b = b.skip(from, to);
    }
    if f.feedback && depth >= 2 && rng.gen_bool(0.4) {
        b = b.feedback(rng.gen_range(1..depth));
    }
    let arch = b.build();
    let subnets = rng.gen_range(1..=depth);
    let wiring = match rng.gen_range(0..4) {
        0 => Wiring::Sequential,
        1 => Wiring::SemiParallel,
        _ => Wiring::Parallel,
    };
    let clocks = if f.clocks && rng.gen_bool(0.6) {
        // Non-decreasing rates from {1, 2, 3, 4}.
        let mut r = 1;
        ClockPolicy::Explicit(
            (0..depth)
                .map(|_| {
                    if rng.gen_bool(0.3) {
                        r = (r + rng.gen_range(1..=2)).min(4);
                    }
                    r
                })
                .collect(),
        )
    } else {
        ClockPolicy::AllOnes
    };
    let config = PipelineConfig::new(&arch, PartitionRequest::Subnetworks(subnets), clocks, wiring).unwrap();
    let topo = arch.resolve().unwrap();
    let frames = (0..frames_n as u64).map(|t| Tensor::uniform(&topo.frame_shape, seed, t)).collect();
    let params = ModelParams::init(&topo.ops(), seed ^ 0x5eed);
    Case { arch, config, frames, params }
}

pub fn fixture(name: &str) -> ArchitectureSpec {
    // Resolves from the core crate and from sibling crates that share this module.
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name);
    pipevid::graph::load_architecture(path).unwrap()
}
