use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pipevid", version, about = "Pipelined inference for layered causal video networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Latency, execution counts, speedups and parameter counts.
    Analyze(AnalyzeArgs),
    /// Discrete-event simulation of the pipeline on parallel workers.
    Simulate(SimulateArgs),
    /// Execute frames through the sequential and pipelined runners.
    Run(RunArgs),
    /// Train a small model on a synthetic task.
    Train(TrainArgs),
    /// Wall-clock comparison of the sequential and pipelined runners.
    Bench(BenchArgs),
    /// Re-run the command recorded in a run manifest.
    Replay(ReplayArgs),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Clocks {
    None,
    Halve,
    /// Per-layer rates, or per-block rates when the length matches the
    /// number of blocks instead.
    List(Vec<u64>),
}

pub fn parse_clocks(s: &str) -> Result<Clocks, String> {
    match s {
        "none" => Ok(Clocks::None),
        "halve" => Ok(Clocks::Halve),
        list => list
            .split(',')
            .map(|r| r.trim().parse::<u64>().map_err(|e| format!("bad clock rate '{r}': {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Clocks::List),
    }
}

/// A comma-separated list of counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct List(pub Vec<usize>);

pub fn parse_list(s: &str) -> Result<List, String> {
    s.split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|e| format!("bad list entry '{v}': {e}")))
        .collect::<Result<Vec<_>, _>>()
        .map(List)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WiringArg {
    Sequential,
    Parallel,
    SemiParallel,
}

#[derive(Clone, Debug, Args)]
pub struct ModelArgs {
    /// Architecture JSON file.
    #[arg(long)]
    pub arch: Option<PathBuf>,
    /// Number of parallel subnetworks.
    #[arg(long, default_value_t = 1)]
    pub subnets: usize,
    /// Clock policy: none, halve, or a comma-separated list of rates.
    #[arg(long, default_value = "none", value_parser = parse_clocks)]
    pub clocks: Clocks,
    /// Wiring; defaults to sequential for one subnetwork, parallel otherwise.
    #[arg(long, value_enum)]
    pub wiring: Option<WiringArg>,
    /// Full pipeline configuration JSON, replacing the partition flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub pred_latency: usize,
}

#[derive(Clone, Debug, Args)]
pub struct OutArgs {
    /// Output directory; must not exist unless --force is given.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Frames over which executions are counted.
    #[arg(long, default_value_t = 16)]
    pub frames: usize,
    /// Print only the parameter counts.
    #[arg(long)]
    pub params: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Clone, Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, default_value_t = 64)]
    pub frames: usize,
    /// Simulate every (subnetworks, workers) pair of the grids.
    #[arg(long)]
    pub sweep: bool,
    #[arg(long, default_value = "1,2,4,7,14", value_parser = parse_list)]
    pub subnet_grid: List,
    #[arg(long, default_value = "1,2,4,8", value_parser = parse_list)]
    pub worker_grid: List,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Number of random frames when no --input is given.
    #[arg(long, default_value_t = 8)]
    pub frames: usize,
    /// Tensor stream of input frames.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Checkpoint directory; random weights from --seed otherwise.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fail unless pipelined outputs equal shifted sequential outputs.
    #[arg(long)]
    pub check_shift: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    MovingDot,
    Classification,
}

#[derive(Clone, Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value = "moving-dot")]
    pub task: TaskArg,
    /// Sequence length.
    #[arg(long, default_value_t = 10)]
    pub frames: usize,
    /// Square frame size of the built-in model.
    #[arg(long, default_value_t = 8)]
    pub size: usize,
    /// Layers of the built-in model.
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
    /// Channels of the built-in model.
    #[arg(long, default_value_t = 6)]
    pub channels: usize,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 16)]
    pub eval_sequences: usize,
    /// Distil from a sequentially trained teacher.
    #[arg(long)]
    pub distill: bool,
    /// Distillation weight; 1 for moving-dot, 100 for classification.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Node depths to distil; the three deepest subnetworks by default.
    #[arg(long, value_parser = parse_list)]
    pub distill_layers: Option<List>,
    /// Sum the distillation terms instead of averaging them.
    #[arg(long)]
    pub distill_sum: bool,
    /// Train sequential and fully parallel models and cross-evaluate them.
    #[arg(long)]
    pub transfer: bool,
    /// Subnetwork counts evaluated by --transfer.
    #[arg(long, default_value = "1,2,4", value_parser = parse_list)]
    pub transfer_grid: List,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Clone, Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 16)]
    pub frames: usize,
    #[arg(long, default_value = "1,2,4", value_parser = parse_list)]
    pub worker_grid: List,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Clone, Debug, Args)]
pub struct ReplayArgs {
    /// manifest.json written by an earlier run.
    pub manifest: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}
