use serde::{Deserialize, Serialize};

use super::{ArchitectureSpec, Topology};
use crate::{Error, Result};

/// How reads that cross a subnetwork boundary are delayed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Wiring {
    /// Every read is from the current frame.
    Sequential,
    /// A read crossing `m` boundaries comes from `m` frames earlier.
    #[default]
    Parallel,
    /// A read crossing any number of boundaries comes from one frame earlier.
    SemiParallel,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PartitionRequest {
    /// Split the units as evenly as possible into this many subnetworks.
    Subnetworks(usize),
    /// Group this many consecutive units per subnetwork.
    UnitsPerSubnet(usize),
    /// Explicit first-layer index of every subnetwork.
    Boundaries(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ClockPolicy {
    /// Double the rate at the start of every run of consecutive pooling
    /// layers that downsample in space or time.
    HalveOnDownsample,
    Explicit(Vec<u64>),
    AllOnes,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// First layer index of each subnetwork; starts with 0.
    pub boundaries: Vec<usize>,
    /// One rate per layer; the head always ticks every frame.
    pub clock_rates: Vec<u64>,
    #[serde(default)]
    pub prediction_latency: usize,
    #[serde(default)]
    pub wiring: Wiring,
    #[serde(default)]
    pub temporalized: bool,
    #[serde(default)]
    pub feedback: bool,
}

impl PipelineConfig {
    /// One subnetwork, every layer ticking every frame.
    pub fn sequential(arch: &ArchitectureSpec) -> Self {
        PipelineConfig {
            boundaries: vec![0],
            clock_rates: vec![1; arch.layers.len()],
            prediction_latency: 0,
            wiring: Wiring::Sequential,
            temporalized: false,
            feedback: arch.feedback.is_some(),
        }
    }

    pub fn new(
        arch: &ArchitectureSpec,
        partition: PartitionRequest,
        clocks: ClockPolicy,
        wiring: Wiring,
    ) -> Result<Self> {
        let cfg = PipelineConfig {
            boundaries: partition_subnetworks(arch, partition)?,
            clock_rates: assign_clock_rates(arch, clocks)?,
            prediction_latency: 0,
            wiring,
            temporalized: false,
            feedback: arch.feedback.is_some(),
        };
        Ok(cfg)
    }

    /// Every layer in its own subnetwork when the units allow it.
    pub fn fully_parallel(arch: &ArchitectureSpec) -> Result<Self> {
        let units = arch.resolve()?.units.len();
        Self::new(
            arch,
            PartitionRequest::Subnetworks(units),
            ClockPolicy::AllOnes,
            Wiring::Parallel,
        )
    }

    pub fn with_wiring(mut self, wiring: Wiring) -> Self {
        self.wiring = wiring;
        self
    }

    pub fn with_clocks(mut self, rates: Vec<u64>) -> Self {
        self.clock_rates = rates;
        self
    }

    pub fn num_subnets(&self) -> usize {
        self.boundaries.len()
    }

    /// Subnetwork of a node depth; the head (depth == layer count) belongs
    /// to the last subnetwork.
    pub fn subnet_of(&self, depth: usize) -> usize {
        self.boundaries.partition_point(|&b| b <= depth) - 1
    }

    /// Rate of a node depth, the head included.
    pub fn rate_of(&self, depth: usize) -> u64 {
        self.clock_rates.get(depth).copied().unwrap_or(1)
    }

    /// Frames by which a read from `producer_subnet` into `consumer_subnet`
    /// lags. Frame inputs count as subnetwork 0.
    pub fn read_delay(&self, producer_subnet: usize, consumer_subnet: usize) -> i64 {
        let m = consumer_subnet.saturating_sub(producer_subnet) as i64;
        match self.wiring {
            Wiring::Sequential => 0,
            Wiring::Parallel => m,
            Wiring::SemiParallel => m.min(1),
        }
    }

    /// Least common multiple of all clock rates.
    pub fn hyperperiod(&self) -> u64 {
        self.clock_rates.iter().fold(1, |acc, &r| lcm(acc, r))
    }

    /// Layer ranges of each subnetwork.
    pub fn subnet_layers(&self, num_layers: usize) -> Vec<std::ops::Range<usize>> {
        (0..self.boundaries.len())
            .map(|s| {
                let end = self.boundaries.get(s + 1).copied().unwrap_or(num_layers);
                self.boundaries[s]..end
            })
            .collect()
    }

    pub fn validate(&self, topo: &Topology) -> Result<()> {
        let n = topo.num_layers();
        check_boundaries(topo, &self.boundaries)?;
        if self.clock_rates.len() != n {
            return Err(Error::config(format!(
                "{} clock rates given for {n} layers",
                self.clock_rates.len()
            )));
        }
        if self.clock_rates.contains(&0) {
            return Err(Error::config("clock rates must be positive"));
        }
        Ok(())
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

fn check_boundaries(topo: &Topology, boundaries: &[usize]) -> Result<()> {
    let n = topo.num_layers();
    if boundaries.first() != Some(&0) {
        return Err(Error::config("subnetwork boundaries must start at layer 0"));
    }
    if boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(format!(
            "subnetwork boundaries {boundaries:?} are not strictly increasing"
        )));
    }
    if let Some(&b) = boundaries.iter().find(|&&b| b >= n) {
        return Err(Error::config(format!("boundary {b} is past the last layer")));
    }
    let starts: Vec<usize> = topo.units.iter().map(|u| u.layers.start).collect();
    if let Some(&b) = boundaries.iter().find(|b| !starts.contains(b)) {
        return Err(Error::config(format!("boundary {b} splits a unit")));
    }
    Ok(())
}

/// First layer of every subnetwork for the requested partition.
pub fn partition_subnetworks(arch: &ArchitectureSpec, request: PartitionRequest) -> Result<Vec<usize>> {
    let topo = arch.resolve()?;
    let starts: Vec<usize> = topo.units.iter().map(|u| u.layers.start).collect();
    let u = starts.len();
    let group_sizes: Vec<usize> = match request {
        PartitionRequest::Boundaries(b) => {
            check_boundaries(&topo, &b)?;
            return Ok(b);
        }
        PartitionRequest::Subnetworks(n) => {
            if n == 0 || n > u {
                return Err(Error::config(format!(
                    "cannot split {u} units into {n} subnetworks"
                )));
            }
            (0..n).map(|s| u / n + usize::from(s < u % n)).collect()
        }
        PartitionRequest::UnitsPerSubnet(k) => {
            if k == 0 {
                return Err(Error::config("units per subnetwork must be positive"));
            }
            (0..u.div_ceil(k)).map(|s| k.min(u - s * k)).collect()
        }
    };
    let mut out = Vec::with_capacity(group_sizes.len());
    let mut next = 0;
    for g in group_sizes {
        out.push(starts[next]);
        next += g;
    }
    Ok(out)
}

/// Per-layer clock rates under `policy`.
pub fn assign_clock_rates(arch: &ArchitectureSpec, policy: ClockPolicy) -> Result<Vec<u64>> {
    let n = arch.layers.len();
    match policy {
        ClockPolicy::AllOnes => Ok(vec![1; n]),
        ClockPolicy::Explicit(rates) => {
            if rates.len() != n {
                return Err(Error::config(format!(
                    "{} clock rates given for {n} layers",
                    rates.len()
                )));
            }
            if rates.contains(&0) {
                return Err(Error::config("clock rates must be positive"));
            }
            Ok(rates)
        }
        ClockPolicy::HalveOnDownsample => {
            let mut rate = 1;
            let mut in_run = false;
            Ok(arch
                .layers
                .iter()
                .map(|l| {
                    let downsamples = l.kind.is_pool() && l.stride.iter().any(|&s| s > 1);
                    if downsamples && !in_run {
                        rate *= 2;
                    }
                    in_run = downsamples;
                    rate
                })
                .collect())
        }
    }
}
