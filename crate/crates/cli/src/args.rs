use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "prism", version, about = "Inverse design of multilayer thin-film coatings")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Material database directory (materials.toml + one CSV per material).
    /// Defaults to the built-in stand-in tables.
    #[arg(long, global = true, env = "PRISM_MATERIALS_DIR")]
    pub materials: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Suppress progress and summary output.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the material database to a directory.
    Materials(MaterialsArgs),
    /// Sample random designs and write a dataset file.
    GenData(GenDataArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Decode designs for target spectra with a trained model.
    Infer(InferArgs),
    /// Simulated-annealing baseline.
    Sa(SaArgs),
    /// Gradient-based (L-BFGS) baseline.
    Diffopt(DiffoptArgs),
    /// Score a designs file against targets.
    Eval(EvalArgs),
    /// Target vs re-simulated spectrum overlays (SVG + CSV per target).
    Plot(PlotArgs),
    /// Decode stacks longer than the training range and report metrics by length.
    Extrapolate(ExtrapolateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MaterialsArgs {
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Valid,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenDataArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub min_layers: usize,
    #[arg(long, default_value_t = 20)]
    pub max_layers: usize,
    /// Seed namespace; dev and valid never share random streams with train.
    #[arg(long, value_enum, default_value_t = Split::Train)]
    pub split: Split,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// desk, prism-13m or prism-44m.
    #[arg(long, default_value = "desk")]
    pub preset: String,
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory: checkpoint/, trace.csv, run.json.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with training settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_min: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Save a checkpoint every N steps (the final one is always saved).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
    /// Continue from a checkpoint directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Greedy,
    Beam,
    Rerank,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset file or spectrum CSV (one target per row).
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Rerank)]
    pub mode: Mode,
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    #[arg(long, default_value_t = 20)]
    pub max_layers: usize,
    /// Leave the greedy design out of the rerank pool.
    #[arg(long)]
    pub no_greedy_pool: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SaArgs {
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 5000)]
    pub steps: usize,
    /// Multiplies steps per restart (0.1 gives the 8 x 500 desk budget).
    #[arg(long, default_value_t = 1.0)]
    pub budget_scale: f64,
    #[arg(long, default_value_t = 0.1)]
    pub t_start: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub t_end: f64,
    #[arg(long, default_value_t = 30.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 20)]
    pub max_layers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write best-so-far traces to <out>/traces/.
    #[arg(long)]
    pub traces: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Mse,
    Mae,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DiffoptArgs {
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Restarts per layer count.
    #[arg(long, default_value_t = 32)]
    pub restarts: usize,
    #[arg(long, value_delimiter = ',', default_value = "3,5,7,10,14,18")]
    pub layer_counts: Vec<usize>,
    #[arg(long, default_value_t = 300)]
    pub iterations: usize,
    #[arg(long, value_enum, default_value_t = Objective::Mse)]
    pub objective: Objective,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use each target's generating materials (dataset targets only).
    #[arg(long)]
    pub oracle_materials: bool,
    /// Also write per-restart merits to <out>/traces/.
    #[arg(long)]
    pub traces: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub designs: PathBuf,
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "eval")]
    pub label: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlotArgs {
    #[arg(long)]
    pub designs: PathBuf,
    #[arg(long)]
    pub targets: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Plot at most this many targets.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExtrapolateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Targets per length bucket.
    #[arg(long, default_value_t = 20)]
    pub per_bucket: usize,
    /// Inclusive layer-count buckets; the first is the training range.
    #[arg(long, value_delimiter = ',', default_value = "1-20,21-30,31-40,41-50")]
    pub buckets: Vec<String>,
    #[arg(long, default_value_t = 50)]
    pub max_layers: usize,
    #[arg(long, value_enum, default_value_t = Mode::Greedy)]
    pub mode: Mode,
    #[arg(long, default_value_t = 5)]
    pub beam: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
