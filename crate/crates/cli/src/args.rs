use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "lmscale",
    version,
    about = "Fit, query and compare language-model scaling laws"
)]
pub struct Cli {
    /// JSON file whose keys mirror command flags; flags on the command line win.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a single-epoch or multi-epoch loss law to training runs.
    Fit(FitArgs),
    /// Predict test loss for a model size and token budget.
    Predict(PredictArgs),
    /// Compute-optimal model size and token count for a FLOP budget.
    Allocate(AllocateArgs),
    /// Smallest compute whose optimal allocation reaches a target loss.
    Invert(InvertArgs),
    /// Pareto envelope of learning curves and its power law in compute.
    Envelope(EnvelopeArgs),
    /// Linear fit of a downstream metric against test loss.
    Correlate(CorrelateArgs),
    /// Ratio of two modalities' metric exponents.
    Compare(CompareArgs),
    /// Compute the other modality needs to match the reference at a budget.
    Project(ProjectArgs),
    /// Generate synthetic runs (and curves) from a law.
    Synth(SynthArgs),
    /// Self-test: gradient checks and allocation cross-checks.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    Single,
    Multi,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, value_name = "PATH")]
    pub runs: PathBuf,
    /// Also fit the loss-compute envelope law, written next to --out as
    /// `<stem>.envelope.json`.
    #[arg(long, value_name = "PATH")]
    pub curves: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub stage: Stage,
    /// Stage-one law to hold fixed for --stage multi. Without it, stage one is
    /// fitted first on the same runs.
    #[arg(long, value_name = "PATH")]
    pub base: Option<PathBuf>,
    #[arg(long, value_name = "F")]
    pub huber_delta: Option<f64>,
    #[arg(long, value_name = "LIST", value_delimiter = ',', allow_negative_numbers = true)]
    pub grid_log_e: Option<Vec<f64>>,
    #[arg(long, value_name = "LIST", value_delimiter = ',', allow_negative_numbers = true)]
    pub grid_log_a: Option<Vec<f64>>,
    #[arg(long, value_name = "LIST", value_delimiter = ',', allow_negative_numbers = true)]
    pub grid_log_b: Option<Vec<f64>>,
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub grid_alpha: Option<Vec<f64>>,
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub grid_beta: Option<Vec<f64>>,
    /// Starting values of ln R* for stage two (used for both R*_N and R*_D).
    #[arg(long, value_name = "LIST", value_delimiter = ',', allow_negative_numbers = true)]
    pub decay_grid: Option<Vec<f64>>,
    #[arg(long, value_name = "F")]
    pub grad_tol: Option<f64>,
    #[arg(long, value_name = "N")]
    pub max_iters: Option<usize>,
    /// Run the initialization grid on one thread.
    #[arg(long)]
    pub serial: bool,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "PATH")]
    pub law: PathBuf,
    #[arg(long, value_name = "F")]
    pub n: f64,
    #[arg(long, value_name = "F")]
    pub d: f64,
    /// Unique tokens; requires a multi-epoch law.
    #[arg(long, value_name = "F")]
    pub u_d: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    #[arg(long, value_name = "PATH")]
    pub law: PathBuf,
    #[arg(long, value_name = "F")]
    pub compute: f64,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[arg(long, value_name = "PATH")]
    pub law: PathBuf,
    #[arg(long, value_name = "F")]
    pub target_loss: f64,
}

#[derive(Debug, Args)]
pub struct EnvelopeArgs {
    #[arg(long, value_name = "PATH", required_unless_present = "runs", conflicts_with = "runs")]
    pub curves: Option<PathBuf>,
    /// Final-run values instead of checkpoints: one point per run.
    #[arg(long, value_name = "PATH")]
    pub runs: Option<PathBuf>,
    /// `loss` or `metric:<name>`.
    #[arg(long, value_name = "Y", default_value = "loss")]
    pub y: String,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Write the envelope points as CSV.
    #[arg(long, value_name = "PATH")]
    pub emit_plot: Option<PathBuf>,
    /// Drop checkpoints below this fraction of each run's final compute.
    #[arg(long, value_name = "F")]
    pub burn_in: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[arg(long, value_name = "PATH")]
    pub runs: PathBuf,
    #[arg(long, value_name = "NAME")]
    pub metric: String,
    /// Keep runs whose metric is at most this value.
    #[arg(long, value_name = "F")]
    pub metric_cap: Option<f64>,
    /// Keep runs whose loss is at least this value.
    #[arg(long, value_name = "F")]
    pub loss_min: Option<f64>,
    /// Write the fit as a `linear` law artifact.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long, value_name = "NAME", default_value = "metric")]
    pub metric: String,
    #[arg(long, value_name = "PATH", requires = "law_other", conflicts_with_all = ["gamma_ref", "gamma_other"])]
    pub law_ref: Option<PathBuf>,
    #[arg(long, value_name = "PATH", requires = "law_ref")]
    pub law_other: Option<PathBuf>,
    #[arg(
        long,
        value_name = "F",
        requires = "gamma_other",
        required_unless_present = "law_ref",
        allow_negative_numbers = true
    )]
    pub gamma_ref: Option<f64>,
    #[arg(long, value_name = "F", requires = "gamma_ref", allow_negative_numbers = true)]
    pub gamma_other: Option<f64>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long, value_name = "PATH")]
    pub law_ref: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub law_other: PathBuf,
    #[arg(long, value_name = "F")]
    pub c_ref: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "PATH")]
    pub law: PathBuf,
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub sizes: Option<Vec<f64>>,
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub ratios: Option<Vec<f64>>,
    /// Epoch counts for repeated-data runs; requires a multi-epoch law.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub epochs: Option<Vec<f64>>,
    /// Standard deviation of Gaussian noise on log-loss.
    #[arg(long, value_name = "F", default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, value_name = "N")]
    pub seed: u64,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    #[arg(long, value_name = "PATH", requires = "checkpoints")]
    pub curves_out: Option<PathBuf>,
    #[arg(long, value_name = "N", requires = "curves_out")]
    pub checkpoints: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long)]
    pub verbose: bool,
}
