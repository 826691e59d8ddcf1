use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use socnav_gnn::gnn::Preset;
use socnav_gnn::graph::Variant;

#[derive(Debug, Parser)]
#[command(
    name = "socnav",
    version,
    about = "Score how socially disturbing a robot pose is with graph neural networks"
)]
#[command(
    after_help = "Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure (I/O, divergence)."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate labelled synthetic scenarios as JSON lines
    Synth(SynthArgs),
    /// Convert one scenario to a graph and dump it as JSON (and optionally DOT)
    Graphize(GraphizeArgs),
    /// Train a model and write a checkpoint plus a training report
    Train(TrainArgs),
    /// Random hyperparameter search over the standard ranges
    Search(SearchArgs),
    /// Evaluate a checkpoint on a labelled dataset
    Eval(EvalArgs),
    /// Print the score in [0, 1] of one scenario (1 = fully compliant)
    Score(ScoreArgs),
    /// Sweep the robot over a grid and write CSV and/or PGM heat maps
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of scenarios (count)
    #[arg(long)]
    pub count: usize,
    /// Random seed (integer)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output .jsonl path
    #[arg(long)]
    pub out: PathBuf,
    /// Minimum humans per scenario (count)
    #[arg(long, default_value_t = 0)]
    pub min_humans: usize,
    /// Maximum humans per scenario (count)
    #[arg(long, default_value_t = 4)]
    pub max_humans: usize,
    /// Minimum objects per scenario (count)
    #[arg(long, default_value_t = 0)]
    pub min_objects: usize,
    /// Maximum objects per scenario (count)
    #[arg(long, default_value_t = 3)]
    pub max_objects: usize,
    /// Smallest room side (meters)
    #[arg(long, default_value_t = 4.0)]
    pub min_room_side: f64,
    /// Largest room side (meters)
    #[arg(long, default_value_t = 8.0)]
    pub max_room_side: f64,
    /// Chance that a human starts an interaction (probability, 0 to 1)
    #[arg(long, default_value_t = 0.5)]
    pub interaction_prob: f64,
    /// Leave the label out of every scenario
    #[arg(long)]
    pub unlabelled: bool,
}

#[derive(Debug, Args)]
pub struct GraphizeArgs {
    /// Scenario JSON file
    #[arg(long)]
    pub scenario: PathBuf,
    /// Graph variant: unlabelled (interaction nodes) or labelled (typed edges)
    #[arg(long, default_value = "unlabelled")]
    pub variant: Variant,
    /// Output JSON path (default: standard output)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write Graphviz DOT to this path
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training set (.jsonl of labelled scenarios)
    #[arg(long)]
    pub data: PathBuf,
    /// Development set (.jsonl of labelled scenarios)
    #[arg(long)]
    pub dev: PathBuf,
    /// Layer plan: gcn, gat, rgcn, ggnn, rgcn-gat-seq, rgcn-gat-interleaved, rgcn-gat-decreasing
    #[arg(long, default_value = "gat")]
    pub preset: Preset,
    /// Graph variant (default: unlabelled for gcn/gat, labelled otherwise)
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Message-passing layers (count)
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    /// Hidden units per layer (count; first layer width for rgcn-gat-decreasing)
    #[arg(long, default_value_t = 129)]
    pub hidden: usize,
    /// Attention heads in hidden GAT layers (count)
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    /// Attention heads in the last GAT layer (count)
    #[arg(long, default_value_t = 3)]
    pub final_heads: usize,
    /// Adam learning rate (unitless, > 0)
    #[arg(long, default_value_t = 5e-5)]
    pub lr: f64,
    /// L2 weight decay (unitless, >= 0)
    #[arg(long, default_value_t = 1e-5)]
    pub wd: f64,
    /// Negative slope of the attention LeakyReLU (unitless, 0 to 1)
    #[arg(long, default_value_t = 0.2114)]
    pub alpha: f64,
    /// Graphs per minibatch (count)
    #[arg(long, default_value_t = 273)]
    pub batch: usize,
    /// Dropout rate between layers (probability, 0 to 1)
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    /// Maximum training epochs (count)
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    /// Epochs without development improvement before stopping (count)
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Random seed (integer)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint output path (JSON)
    #[arg(long)]
    pub out: PathBuf,
    /// Training report path (JSON; default: <out>.report.json)
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Training set (.jsonl of labelled scenarios)
    #[arg(long)]
    pub data: PathBuf,
    /// Development set (.jsonl of labelled scenarios)
    #[arg(long)]
    pub dev: PathBuf,
    /// Layer plan searched over (see `train --help`)
    #[arg(long, default_value = "gat")]
    pub preset: Preset,
    /// Graph variant (default depends on the preset)
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Number of training sessions (count)
    #[arg(long)]
    pub sessions: usize,
    /// Random seed for sampling and training (integer)
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Maximum epochs per session (count)
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    /// Early-stopping patience per session (epochs)
    #[arg(long, default_value_t = 5)]
    pub patience: usize,
    /// Parallel sessions (count); results do not depend on it
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Ranked results output path (JSON)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint file (JSON)
    #[arg(long)]
    pub model: PathBuf,
    /// Labelled dataset (.jsonl)
    #[arg(long)]
    pub data: PathBuf,
    /// Histogram bins over absolute error in [0, 1] (count)
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Report output path (JSON; default: standard output)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Histogram output path (CSV with bin_left,count)
    #[arg(long)]
    pub histogram: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Checkpoint file (JSON)
    #[arg(long)]
    pub model: PathBuf,
    /// Scenario JSON file
    #[arg(long)]
    pub scenario: PathBuf,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    /// Checkpoint file (JSON)
    #[arg(long)]
    pub model: PathBuf,
    /// Scenario JSON file; its robot pose is replaced per cell
    #[arg(long)]
    pub scenario: PathBuf,
    /// Cell size (meters)
    #[arg(long, default_value_t = 0.1)]
    pub resolution: f64,
    /// Robot heading for every cell (radians; default pi/2, facing +y)
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
    pub theta: f64,
    /// Grid left edge (meters; default: room bounding box)
    #[arg(long, allow_hyphen_values = true)]
    pub x_min: Option<f64>,
    /// Grid right edge (meters; default: room bounding box)
    #[arg(long, allow_hyphen_values = true)]
    pub x_max: Option<f64>,
    /// Grid bottom edge (meters; default: room bounding box)
    #[arg(long, allow_hyphen_values = true)]
    pub y_min: Option<f64>,
    /// Grid top edge (meters; default: room bounding box)
    #[arg(long, allow_hyphen_values = true)]
    pub y_max: Option<f64>,
    /// Write -1 (CSV) and 0 (PGM) for cells outside the room polygon
    #[arg(long)]
    pub mask_outside: bool,
    /// Parallel workers (count); results do not depend on it
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// CSV output path (x,y,score; x and y in meters)
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// PGM output path (8-bit P5, row 0 = y_max)
    #[arg(long)]
    pub pgm: Option<PathBuf>,
}
