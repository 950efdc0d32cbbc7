//! `depthbench` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 model (graph or weights) error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use depthbench_core::bench::{DEFAULT_RUNS, DEFAULT_WARMUP};
use depthbench_core::Error;

#[derive(Debug, Parser)]
#[command(name = "depthbench", version, about = "Monocular depth benchmarking toolkit")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dataset root (overrides DEPTHBENCH_DATA_DIR and the config file).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,

    /// Meters per raw 16-bit depth unit.
    #[arg(long, global = true)]
    unit_scale: Option<f64>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compare predicted depth PNGs against ground truth.
    Evaluate(EvaluateArgs),
    /// Compute the fidelity/latency score of one result.
    Score(ScoreArgs),
    /// Rank results from a CSV of name,si_rmse,runtime_ms rows.
    Leaderboard(LeaderboardArgs),
    /// Run a graph on one RGB image and write a 16-bit depth PNG.
    Infer(InferArgs),
    /// Measure single-image inference latency.
    Bench(BenchArgs),
    /// Write seeded random (or zero) weights for a graph.
    GenWeights(GenWeightsArgs),
    /// Print the resolved configuration as JSON.
    ShowConfig,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Directory of predicted depth PNGs named `<image_id>.png`.
    #[arg(long)]
    pred_dir: PathBuf,
    /// Directory of ground-truth depth PNGs named `<image_id>.png`.
    #[arg(long, conflicts_with = "manifest")]
    gt_dir: Option<PathBuf>,
    /// CSV manifest providing ground-truth paths by image_id.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory for report.csv and report.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = AggregationArg::PixelPooled)]
    aggregation: AggregationArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AggregationArg {
    PixelPooled,
    PerImageMean,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    si_rmse: f64,
    #[arg(long)]
    runtime_ms: f64,
    /// Normalization constant; defaults to the calibrated value.
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Debug, Args)]
struct LeaderboardArgs {
    /// Input CSV with header name,si_rmse,runtime_ms.
    input: PathBuf,
    /// Also write the ranked table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Graph JSON, or `builtin:tcl-tiny`.
    #[arg(long)]
    graph: String,
    /// DBW1 weight file.
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, value_enum, default_value_t = KernelArg::Optimized)]
    kernels: KernelArg,
    /// Run linear blocks in expanded two-convolution form.
    #[arg(long)]
    no_collapse: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelArg {
    Naive,
    Optimized,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// 8-bit RGB PNG.
    #[arg(long)]
    input: PathBuf,
    /// Output 16-bit depth PNG.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// RGB PNG to reuse for every run; a mid-gray image otherwise.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_RUNS)]
    runs: usize,
    #[arg(long, default_value_t = DEFAULT_WARMUP)]
    warmup: usize,
    /// Statistic used as the run's runtime.
    #[arg(long, value_enum, default_value_t = StatisticArg::P50)]
    statistic: StatisticArg,
    /// Latency report JSON path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StatisticArg {
    P50,
    Mean,
}

#[derive(Debug, Args)]
struct GenWeightsArgs {
    /// Graph JSON, or `builtin:tcl-tiny`.
    #[arg(long)]
    graph: String,
    #[arg(long)]
    out: PathBuf,
    /// All-zero weights instead of seeded random ones.
    #[arg(long)]
    zeros: bool,
}

/// A failed run: message for stderr plus process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_model_error() {
            3
        } else if matches!(e, Error::Config(_)) {
            1
        } else {
            2
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
