mod common;

use std::collections::{BTreeSet, HashMap};

use common::{fixture, random_case, Features};
use pipevid::analysis::{
    compute_cost_model, execution_counts, information_latency, parameter_count, temporal_receptive_field,
    theoretical_speedup, ParamConvention,
};
use pipevid::graph::{
    parse_architecture, partition_subnetworks, to_json, unroll, unroll_from, ChainBuilder, ClockPolicy,
    PartitionRequest, PipelineConfig, Source, Topology, Wiring,
};
use proptest::prelude::*;

const NO_FEEDBACK: Features = Features { extents: true, clocks: true, skips: true, feedback: false };

fn densenet_configs() -> (pipevid::graph::ArchitectureSpec, PipelineConfig, PipelineConfig) {
    let arch = fixture("pardensenet.json");
    let plain = PipelineConfig::sequential(&arch);
    let clocked = PipelineConfig::new(
        &arch,
        PartitionRequest::Subnetworks(1),
        ClockPolicy::HalveOnDownsample,
        Wiring::Sequential,
    )
    .unwrap();
    (arch, plain, clocked)
}

#[test]
fn densenet_counts_416_and_86() {
    let (arch, plain, clocked) = densenet_configs();
    let base = execution_counts(&arch, &plain, 16).unwrap();
    let fast = execution_counts(&arch, &clocked, 16).unwrap();
    assert_eq!(base.unit_total, 416);
    assert_eq!(fast.unit_total, 86);
    let s = theoretical_speedup(&arch, &clocked, 16).unwrap();
    assert!((s - 416.0 / 86.0).abs() < 1e-12);
}

#[test]
fn zero_frames_execute_nothing() {
    let (arch, _, clocked) = densenet_configs();
    let c = execution_counts(&arch, &clocked, 0).unwrap();
    assert_eq!(c.layer_total, 0);
    assert_eq!(c.unit_total, 0);
    assert!(theoretical_speedup(&arch, &clocked, 0).is_err());
}

#[test]
fn all_ones_speedup_is_one() {
    let (arch, plain, _) = densenet_configs();
    assert_eq!(theoretical_speedup(&arch, &plain, 16).unwrap(), 1.0);
}

#[test]
fn inception_weights_only_parameter_count() {
    let arch = fixture("parinception.json");
    assert_eq!(parameter_count(&arch, ParamConvention::WeightsOnly).unwrap().total, 12_501_056);
}

#[test]
fn pointwise_64_to_64_conv_has_4096_weights() {
    let text = r#"{"name": "pw", "input_shape": [1, 56, 56, 64],
        "layers": [{"name": "pw", "kind": "conv", "kernel": [1, 1, 1], "stride": [1, 1, 1], "out_channels": 64}],
        "head": {"kind": "classifier", "inputs": ["pw"], "kernel": [1, 1, 1], "out_channels": 1}}"#;
    let arch = parse_architecture(text).unwrap();
    let p = parameter_count(&arch, ParamConvention::WeightsOnly).unwrap();
    assert_eq!(p.per_layer[0], ("pw".to_string(), 4096));
    let cost = compute_cost_model(&arch).unwrap();
    assert_eq!(cost.per_node[0], 4096 * 56 * 56);
}

#[test]
fn chain_parameters_match_closed_form() {
    let (depth, ch, cin, k) = (5usize, 3usize, 2usize, 3usize);
    let extents = vec![1, 3, 2, 1, 3];
    let arch = ChainBuilder::new(depth)
        .channels(ch)
        .input_channels(cin)
        .kernel(k)
        .extents(extents.clone())
        .build();
    let mut expect = 0;
    for (i, e) in extents.iter().enumerate() {
        let fan_in = if i == 0 { cin } else { ch };
        expect += ch * fan_in * e * k * k;
    }
    expect += ch; // dense 1x1 head with one output channel
    let weights = parameter_count(&arch, ParamConvention::WeightsOnly).unwrap().total;
    assert_eq!(weights, expect as u64);
    let biased = parameter_count(&arch, ParamConvention::WithBias).unwrap().total;
    assert_eq!(biased, (expect + depth * ch + 1) as u64);
}

#[test]
fn information_latency_anchors() {
    let arch = ChainBuilder::new(4).build();
    let seq = unroll(&arch, &PipelineConfig::sequential(&arch), 8).unwrap();
    assert_eq!(information_latency(&seq).unwrap().information_latency, 0);
    let par = unroll(&arch, &PipelineConfig::fully_parallel(&arch).unwrap(), 8).unwrap();
    assert_eq!(information_latency(&par).unwrap().information_latency, 3);
}

/// Shortest path from the frames to every node where an edge weighs its
/// read delay. Valid for unclocked configs; feedback only lengthens paths.
fn shortest_delay_oracle(topo: &Topology, cfg: &PipelineConfig) -> Vec<i64> {
    let mut dist = vec![i64::MAX; topo.nodes.len()];
    for (d, node) in topo.nodes.iter().enumerate() {
        let s = cfg.subnet_of(d);
        for src in &node.sources {
            let v = match *src {
                Source::Frames => cfg.read_delay(0, s),
                Source::Layer(p) => dist[p].saturating_add(cfg.read_delay(cfg.subnet_of(p), s)),
                Source::Feedback => continue,
            };
            dist[d] = dist[d].min(v);
        }
    }
    dist
}

#[test]
fn densenet_latency_matches_shortest_path_oracle() {
    let arch = fixture("pardensenet.json");
    let topo = arch.resolve().unwrap();
    for wiring in [Wiring::Parallel, Wiring::SemiParallel, Wiring::Sequential] {
        for subnets in [1, 2, 5, 14] {
            let cfg = PipelineConfig::new(&arch, PartitionRequest::Subnetworks(subnets), ClockPolicy::AllOnes, wiring)
                .unwrap();
            let g = unroll(&arch, &cfg, 20).unwrap();
            let report = information_latency(&g).unwrap();
            assert_eq!(report.per_layer, shortest_delay_oracle(&topo, &cfg), "{wiring:?} x{subnets}");
        }
    }
    let cfg = PipelineConfig::new(&arch, PartitionRequest::Subnetworks(14), ClockPolicy::AllOnes, Wiring::Parallel)
        .unwrap();
    let g = unroll(&arch, &cfg, 20).unwrap();
    assert_eq!(information_latency(&g).unwrap().information_latency, 13);
}

#[test]
fn sequential_extent_three_chain_sees_2d_plus_1_frames() {
    for depth in 1..=5 {
        let arch = ChainBuilder::new(depth).extents(vec![3; depth]).build();
        let g = unroll_from(&arch, &PipelineConfig::sequential(&arch), -30, 40).unwrap();
        for t in [0i64, 5] {
            let rf = temporal_receptive_field(&g, depth - 1, t).unwrap();
            let want: BTreeSet<i64> = (t - 2 * depth as i64..=t).collect();
            assert_eq!(rf.visible_frames, want, "depth {depth} t {t}");
        }
    }
}

#[test]
fn fully_parallel_latency_four_extent_three_sees_minus_four_at_zero() {
    let arch = ChainBuilder::new(5).extents(vec![3; 5]).build();
    let cfg = PipelineConfig::fully_parallel(&arch).unwrap();
    let g = unroll_from(&arch, &cfg, -30, 31).unwrap();
    assert_eq!(information_latency(&g).unwrap().information_latency, 4);
    let deepest = temporal_receptive_field(&g, 4, 0).unwrap();
    assert_eq!(deepest.newest(), Some(-4));
    let head = temporal_receptive_field(&g, 5, 0).unwrap();
    assert_eq!(head.newest(), Some(-4));
}

/// Receptive field recomputed from the topology and config alone.
struct RfOracle<'a> {
    topo: &'a Topology,
    cfg: &'a PipelineConfig,
    start: i64,
    memo: HashMap<(usize, i64), BTreeSet<i64>>,
}

impl RfOracle<'_> {
    fn field(&mut self, d: usize, t: i64) -> BTreeSet<i64> {
        if let Some(v) = self.memo.get(&(d, t)) {
            return v.clone();
        }
        let node = &self.topo.nodes[d];
        let s = self.cfg.subnet_of(d);
        let mut out = BTreeSet::new();
        for src in node.sources.clone() {
            let (rate, delay, producer) = match src {
                Source::Frames => (1i64, self.cfg.read_delay(0, s), None),
                Source::Layer(p) => (
                    self.cfg.rate_of(p) as i64,
                    self.cfg.read_delay(self.cfg.subnet_of(p), s),
                    Some(p),
                ),
                Source::Feedback => unreachable!("oracle ignores feedback"),
            };
            let tau = t - delay;
            let newest = tau.div_euclid(rate) * rate;
            for k in 0..node.extent as i64 {
                let at = newest - k * rate;
                if at < self.start {
                    continue;
                }
                match producer {
                    None => {
                        out.insert(at);
                    }
                    Some(p) => out.extend(self.field(p, at)),
                }
            }
        }
        self.memo.insert((d, t), out.clone());
        out
    }
}

#[test]
fn parallel_wiring_breaks_nesting() {
    let arch = ChainBuilder::new(2).build();
    let cfg = PipelineConfig::fully_parallel(&arch).unwrap();
    let g = unroll(&arch, &cfg, 6).unwrap();
    let found = (0..6).any(|t| {
        let a = temporal_receptive_field(&g, 0, t).unwrap().visible_frames;
        let b = temporal_receptive_field(&g, 1, t).unwrap().visible_frames;
        !a.is_subset(&b)
    });
    assert!(found, "expected a frame where layer 0 sees something layer 1 does not");
}

#[test]
fn one_by_one_conv_cost() {
    let arch = ChainBuilder::new(1).channels(8).input_channels(4).kernel(1).size(6, 7).build();
    let cost = compute_cost_model(&arch).unwrap();
    assert_eq!(cost.per_node[0], 8 * 4 * 6 * 7);
}

#[test]
fn inception_stem_share_is_about_a_third() {
    let arch = fixture("parinception.json");
    let topo = arch.resolve().unwrap();
    let cost = compute_cost_model(&arch).unwrap();
    let stem: u64 = topo.units[0].layers.clone().map(|d| cost.per_node[d]).sum();
    let share = stem as f64 / cost.total() as f64;
    // Reported as roughly one third; the fixture's stem measures 0.44.
    assert!((0.30..=0.50).contains(&share), "stem share {share}");
}

fn small_case() -> impl Strategy<Value = (usize, u64)> {
    (1usize..=6, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn receptive_field_matches_closure_oracle((depth, seed) in small_case()) {
        let case = random_case(depth, seed, NO_FEEDBACK);
        let g = unroll(&case.arch, &case.config, case.frames.len()).unwrap();
        let mut oracle = RfOracle { topo: &g.topology, cfg: &case.config, start: 0, memo: HashMap::new() };
        for n in &g.nodes {
            let rf = temporal_receptive_field(&g, n.depth, n.t).unwrap();
            prop_assert_eq!(rf.visible_frames, oracle.field(n.depth, n.t));
        }
    }

    #[test]
    fn sequential_receptive_fields_nest((depth, seed) in small_case()) {
        let mut case = random_case(depth, seed, NO_FEEDBACK);
        case.config.wiring = Wiring::Sequential;
        let g = unroll(&case.arch, &case.config, case.frames.len()).unwrap();
        for d in 0..depth {
            for t in 0..case.frames.len() as i64 {
                if g.node_at(d, t).is_none() || g.node_at(d + 1, t).is_none() {
                    continue;
                }
                let a = temporal_receptive_field(&g, d, t).unwrap().visible_frames;
                let b = temporal_receptive_field(&g, d + 1, t).unwrap().visible_frames;
                prop_assert!(a.is_subset(&b), "layer {} at {}: {:?} vs {:?}", d, t, a, b);
            }
        }
    }

    #[test]
    fn latency_never_drops_when_a_boundary_is_added(
        (depth, seed) in (2usize..=6, any::<u64>()),
        pick in any::<prop::sample::Index>(),
        semi in any::<bool>(),
    ) {
        let mut case = random_case(depth, seed, NO_FEEDBACK);
        case.config.wiring = if semi { Wiring::SemiParallel } else { Wiring::Parallel };
        let free: Vec<usize> = (1..depth).filter(|b| !case.config.boundaries.contains(b)).collect();
        prop_assume!(!free.is_empty());
        let mut more = case.config.boundaries.clone();
        more.push(free[pick.index(free.len())]);
        more.sort_unstable();
        let more = partition_subnetworks(&case.arch, PartitionRequest::Boundaries(more)).unwrap();
        let wider = PipelineConfig { boundaries: more, ..case.config.clone() };
        let frames = 48;
        let a = information_latency(&unroll(&case.arch, &case.config, frames).unwrap()).unwrap();
        let b = information_latency(&unroll(&case.arch, &wider, frames).unwrap()).unwrap();
        prop_assert!(b.information_latency >= a.information_latency);
    }

    #[test]
    fn counts_follow_the_clocks((depth, seed) in small_case(), frames in 0usize..40) {
        let case = random_case(depth, seed, NO_FEEDBACK);
        let c = execution_counts(&case.arch, &case.config, frames).unwrap();
        for (d, &n) in c.per_layer.iter().enumerate() {
            let r = case.config.rate_of(d) as usize;
            prop_assert_eq!(n as usize, frames.div_ceil(r));
        }
        let ones = PipelineConfig { clock_rates: vec![1; depth], ..case.config.clone() };
        let c = execution_counts(&case.arch, &ones, frames).unwrap();
        prop_assert_eq!(c.layer_total as usize, depth * frames);
    }

    #[test]
    fn parameter_count_survives_round_trip((depth, seed) in small_case()) {
        let case = random_case(depth, seed, NO_FEEDBACK);
        let again = parse_architecture(&to_json(&case.arch)).unwrap();
        for conv in ParamConvention::ALL {
            prop_assert_eq!(
                parameter_count(&case.arch, conv).unwrap(),
                parameter_count(&again, conv).unwrap()
            );
        }
    }
}
