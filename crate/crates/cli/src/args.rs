use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mixlaw::fit::FitConfig;
use mixlaw::optimize::OptimizerConfig;
use mixlaw::plan::Strategy;

/// Mixture scaling-law pipeline: synthetic worlds, fitting, planning and
/// mixture optimization.
#[derive(Debug, Parser)]
#[command(name = "mixlaw", version, about)]
pub struct Cli {
    /// Worker threads for restarts and repeats (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample an oracle world and write world.json and runs.jsonl.
    Synth(SynthArgs),
    /// Allocate a compute budget across scales.
    Plan(PlanArgs),
    /// Fit a law and write params.json and fit_report.json.
    Fit(FitCommand),
    /// Evaluate fitted parameters on a runs file.
    Predict(PredictArgs),
    /// Find the optimal mixture of a fitted law.
    Optimize(OptimizeCommand),
    /// Compare sampling strategies under compute budgets.
    EvalStrategies(EvalStrategiesArgs),
    /// Optimal mixture as a function of scale.
    Sweep(SweepArgs),
    /// Held-out error of CAMEL fits over a range of domain counts.
    AblateK(AblateKArgs),
    /// Held-out error of CAMEL against the per-scale DML baseline.
    Compare(CompareArgs),
    /// Render study outputs as a Markdown report.
    Report(ReportArgs),
}

/// Fit settings; unset fields keep the command's defaults.
#[derive(Debug, Clone, Args)]
pub struct FitFlags {
    /// Number of intrinsic domains.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub polish_restarts: Option<usize>,
    #[arg(long)]
    pub polish_iterations: Option<usize>,
}

impl FitFlags {
    pub fn apply(&self, base: FitConfig) -> FitConfig {
        FitConfig {
            k: self.k.unwrap_or(base.k),
            restarts: self.restarts.unwrap_or(base.restarts),
            iterations: self.iterations.unwrap_or(base.iterations),
            step: self.step.unwrap_or(base.step),
            polish_restarts: self.polish_restarts.unwrap_or(base.polish_restarts),
            polish_iterations: self.polish_iterations.unwrap_or(base.polish_iterations),
            ..base
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OptFlags {
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub opt_iterations: Option<usize>,
}

impl OptFlags {
    pub fn config(&self, seed: u64) -> OptimizerConfig {
        let base = OptimizerConfig::default();
        OptimizerConfig {
            starts: self.starts.unwrap_or(base.starts),
            iterations: self.opt_iterations.unwrap_or(base.iterations),
            seed,
            ..base
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Number of datasets.
    #[arg(long, default_value_t = 5)]
    pub n: usize,
    /// Number of training scales taken from the default ladder.
    #[arg(long, default_value_t = 6, conflicts_with = "scale_values")]
    pub scales: usize,
    /// Explicit training scales.
    #[arg(long, value_delimiter = ',')]
    pub scale_values: Option<Vec<f64>>,
    /// Also write heldout.jsonl, noiseless, at this scale.
    #[arg(long)]
    pub heldout_scale: Option<f64>,
    /// Multiplicative log-normal noise on the recorded losses.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 20.0)]
    pub tokens_per_param: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eps_a_max: f64,
    /// Validation sets besides `val`.
    #[arg(long, default_value_t = 0)]
    pub extra_val: usize,
    /// Benchmarks to simulate (at most 7 take the preset names).
    #[arg(long, default_value_t = 0)]
    pub benchmarks: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub strategy: Strategy,
    /// Budget in FLOPs.
    #[arg(long)]
    pub budget: f64,
    /// Model scales in ascending order.
    #[arg(long, value_delimiter = ',', required = true)]
    pub scales: Vec<f64>,
    #[arg(long, default_value_t = 20.0)]
    pub tokens_per_param: f64,
    #[arg(long, default_value_t = mixlaw::plan::DEFAULT_MAX_PER_SCALE)]
    pub max_per_scale: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LawKind {
    Camel,
    Dml,
    Bench,
}

#[derive(Debug, Args)]
pub struct FitCommand {
    #[arg(value_enum)]
    pub law: LawKind,
    #[arg(long)]
    pub runs: PathBuf,
    /// Loss name, `proxy:<benchmark>` or `benchmark:<name>`.
    #[arg(long, default_value = "val")]
    pub target: String,
    /// Benchmarks to fit with `fit bench` (default: all recorded).
    #[arg(long, value_delimiter = ',')]
    pub benchmarks: Option<Vec<String>>,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub fit: FitFlags,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub runs: PathBuf,
    /// What to compare against; `benchmark:<name>` for a benchmark suite.
    #[arg(long, default_value = "val")]
    pub target: String,
    /// Predictions CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveKind {
    Loss,
    Benchmarks,
}

#[derive(Debug, Args)]
pub struct OptimizeCommand {
    #[arg(value_enum)]
    pub objective: ObjectiveKind,
    #[arg(long)]
    pub params: PathBuf,
    /// Target model scale.
    #[arg(long)]
    pub scale: f64,
    /// Preset name, inline JSON object, or path to a weights JSON file.
    #[arg(long, default_value = "balanced")]
    pub weights: String,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub opt: OptFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalStrategiesArgs {
    /// `all` or a comma-separated list.
    #[arg(long, default_value = "all")]
    pub strategies: String,
    /// How many of the suite's budget fractions to run.
    #[arg(long, conflicts_with_all = ["budget_fractions", "budget"])]
    pub budgets: Option<usize>,
    /// Budgets as fractions of the full-pool cost.
    #[arg(long, value_delimiter = ',', conflicts_with = "budget")]
    pub budget_fractions: Option<Vec<f64>>,
    /// One absolute budget in FLOPs.
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Pool of runs grouped by scale; the synthetic suite when absent.
    #[arg(long, requires = "heldout_scale")]
    pub runs: Option<PathBuf>,
    /// Runs at this scale are held out rather than sampled.
    #[arg(long)]
    pub heldout_scale: Option<f64>,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Strategy-by-budget CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full per-repeat reports as JSON.
    #[arg(long)]
    pub details: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub scales: Vec<f64>,
    /// With a benchmark suite: preset name or weights JSON path.
    #[arg(long, default_value = "balanced")]
    pub weights: String,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub opt: OptFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Training and held-out data: either a runs file split at the held-out
/// scale, or a synthetic world generated from the seed.
#[derive(Debug, Args)]
pub struct StudyData {
    #[arg(long, requires = "heldout_scale")]
    pub runs: Option<PathBuf>,
    #[arg(long)]
    pub heldout_scale: Option<f64>,
    /// Domain count of the synthetic world.
    #[arg(long, default_value_t = 5)]
    pub world_k: usize,
    /// Loss noise of the synthetic world.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
}

#[derive(Debug, Args)]
pub struct AblateKArgs {
    #[command(flatten)]
    pub data: StudyData,
    #[arg(long, default_value_t = 2)]
    pub k_min: usize,
    #[arg(long, default_value_t = 8)]
    pub k_max: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub fit: FitFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: StudyData,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub fit: FitFlags,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Strategy-by-budget CSV from eval-strategies.
    #[arg(long)]
    pub strategies: Option<PathBuf>,
    /// Law comparison CSV from compare.
    #[arg(long)]
    pub comparison: Option<PathBuf>,
    /// Sweep CSV.
    #[arg(long)]
    pub sweep: Option<PathBuf>,
    /// Error-vs-k CSV from ablate-k.
    #[arg(long)]
    pub ablation: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
