use std::path::PathBuf;
use std::time::Duration;

use cashplan_core::planner::ModelKind;
use cashplan_core::solver::SolveOptions;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Scenario-based purchasing plans for a cash-constrained online retailer,
/// with and without order-based loans.
///
/// Every command writes its outputs plus a `manifest.json` into `--out`.
/// The solver backend is chosen with the PLANNER_SOLVER environment variable
/// (default: highs).
#[derive(Debug, Parser)]
#[command(name = "cashplan", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit log-normal demand per product and regime from comment counts.
    Fit(FitArgs),
    /// Generate moment-matched scenario trees.
    Gen(GenArgs),
    /// Reduce a scenario fan with fast forward selection.
    Reduce(ReduceArgs),
    /// Solve one planning model.
    Solve(SolveArgs),
    /// Run an evaluation study over generated trees.
    Eval(EvalArgs),
    /// Run the full experiment battery on the built-in instance and trees.
    ReproPaper(ReproArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Relative MIP gap at which a solve stops.
    #[arg(long, default_value_t = 1e-6)]
    pub mip_gap: f64,
    /// Wall-clock limit per solve, in seconds.
    #[arg(long, default_value_t = 600.0)]
    pub time_limit: f64,
    /// Random seed handed to the solver.
    #[arg(long, default_value_t = 0)]
    pub solver_seed: u32,
    /// Threads per solve; 1 keeps results reproducible.
    #[arg(long, default_value_t = 1)]
    pub threads: u32,
}

impl SolverArgs {
    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            mip_gap: self.mip_gap,
            time_limit: Duration::from_secs_f64(self.time_limit.max(0.0)),
            threads: self.threads,
            seed: self.solver_seed,
            ..SolveOptions::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV with columns product_id, period_start_date, regime, observation.
    #[arg(long)]
    pub input: PathBuf,
    /// Fraction of customers who leave a comment.
    #[arg(long, default_value_t = 0.1)]
    pub rate: f64,
    /// Periods between a sale and its comment.
    #[arg(long, default_value_t = 0)]
    pub lag: usize,
    /// Output directory (fits.json, manifest.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Instance JSON; the built-in instance when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed; tree k uses seed + k - 1.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Moments to match per product: 1 = mean, 2 = +variance, 3 = +skewness.
    #[arg(long, default_value_t = 3)]
    pub moments: usize,
    /// Branches per period; derived from the moment count when omitted.
    #[arg(long)]
    pub branches: Option<usize>,
    /// Number of independent trees.
    #[arg(long, default_value_t = 3)]
    pub trees: usize,
    /// Random restarts of the moment matcher.
    #[arg(long, default_value_t = 20)]
    pub starts: usize,
    /// Output directory (tree_K.json, fan_K.csv, branch_sets.json, manifest.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    /// Fan CSV as written by `gen`.
    #[arg(long)]
    pub fan: PathBuf,
    /// Number of scenarios to keep.
    #[arg(long, default_value_t = 140)]
    pub k: usize,
    /// Output directory (reduced.csv, reduction.json, manifest.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Instance JSON; the built-in instance when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Demand fan CSV. Deterministic models default to the mean forecast.
    #[arg(long)]
    pub demand: Option<PathBuf>,
    /// so-d, ol-d, so-s or ol-s.
    #[arg(long)]
    pub model: ModelKind,
    /// Also write the model as model.lp.
    #[arg(long)]
    pub write_lp: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory (solution.json, summary.csv, manifest.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Study {
    VssEvpi,
    Stability,
    Sweep,
    ProfitGap,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Instance JSON; the built-in instance when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding tree_K.json files.
    #[arg(long)]
    pub trees_dir: PathBuf,
    #[arg(long, value_enum)]
    pub study: Study,
    /// Profit-gap parameter: initial-cash, receipt-delay, overhead or pattern.
    #[arg(long)]
    pub param: Option<String>,
    /// Comma-separated parameter values (patterns as 0/1 strings, e.g. 000011).
    #[arg(long)]
    pub values: Option<String>,
    /// Scenarios kept after reduction; 0 solves the full trees.
    #[arg(long, default_value_t = 140)]
    pub reduce_to: usize,
    /// Comma-separated sample sizes for the sweep.
    #[arg(long, default_value = "20,40,60,80,100,120,140,160,180")]
    pub sizes: String,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory (one CSV per study, report.json, manifest.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReproArgs {
    /// Scenarios kept after reduction.
    #[arg(long, default_value_t = 140)]
    pub scenarios: usize,
    /// Small reductions and short value lists, for smoke runs.
    #[arg(long)]
    pub quick: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}
