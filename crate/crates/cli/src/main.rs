//! `maskcal` command-line tool.

mod commands;
mod error;
mod ppm;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "maskcal", version, about = "Pseudo-mask calibration, panoptic evaluation and synthetic benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic scenes and optional perturbed predictions.
    Synth(SynthArgs),
    /// Compute a SLIC superpixel map for an image.
    Superpixels(SuperpixelArgs),
    /// Calibrate a predicted mask set against category centroids.
    Calibrate(CalibrateArgs),
    /// Panoptic quality of a prediction against ground truth.
    Evaluate(EvaluateArgs),
    /// Run the two-domain self-training benchmark.
    Selftrain(SelftrainArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DomainArg {
    Source,
    Target,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Scene settings (TOML); command-line sizes override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "source")]
    domain: DomainArg,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// Number of scenes; seeds run from `--seed` upward, one subdirectory each.
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// Also write perturbed predictions.
    #[arg(long)]
    perturb: bool,
    #[arg(long, default_value_t = 0.3)]
    flip_rate: f64,
    #[arg(long, default_value_t = 1)]
    boundary_radius: usize,
    #[arg(long, default_value_t = 0.2)]
    impostor_rate: f64,
}

#[derive(Debug, Args)]
struct SlicArgs {
    /// Target superpixel count (default: one per 400 pixels).
    #[arg(long = "superpixels")]
    count: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    compactness: f64,
}

#[derive(Debug, Args)]
struct SuperpixelArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    slic: SlicArgs,
    /// Also write a PPM with boundaries drawn over the image.
    #[arg(long)]
    overlay: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Neutral,
    Exclude,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Predicted mask set (JSON).
    #[arg(long)]
    masks: PathBuf,
    /// Centroid store (JSON).
    #[arg(long, conflicts_with = "init_from", required_unless_present = "init_from")]
    centroids: Option<PathBuf>,
    /// Initialise centroids from this predicted mask set instead.
    #[arg(long)]
    init_from: Option<PathBuf>,
    /// Calibrated mask set (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Write the refreshed centroid store here.
    #[arg(long)]
    centroids_out: Option<PathBuf>,
    /// Write the calibrated masks as a panoptic label tensor here.
    #[arg(long)]
    label_out: Option<PathBuf>,
    /// Use this superpixel map instead of computing one.
    #[arg(long)]
    superpixel_map: Option<PathBuf>,
    #[arg(long, default_value = "RSP")]
    order: String,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long, default_value_t = 0.5)]
    vote: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Centroid EMA coefficient; overrides the value stored with the centroids.
    #[arg(long)]
    gamma_prime: Option<f64>,
    #[arg(long, value_enum, default_value = "neutral")]
    invalid_policy: PolicyArg,
    #[command(flatten)]
    slic: SlicArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Predicted panoptic label tensor, or a mask set (JSON).
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth panoptic label tensor.
    #[arg(long)]
    gt: PathBuf,
    /// Number of categories (default: inferred).
    #[arg(long)]
    categories: Option<usize>,
    /// Leave prediction pixels on void ground truth out of the IoU.
    #[arg(long)]
    ignore_void: bool,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelftrainArgs {
    /// Benchmark settings (TOML).
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of seeds, run in parallel from `--seed` upward.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Calibration stage order, or `none` to train on raw masks.
    #[arg(long)]
    order: Option<String>,
    /// Per-step JSON-lines log.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Final reports (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn init_threads() -> error::CliResult<()> {
    if let Ok(v) = std::env::var("MASKCAL_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| error::CliError::Usage(format!("MASKCAL_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| error::CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Superpixels(a) => commands::superpixels(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Selftrain(a) => commands::selftrain(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("maskcal: {} error: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
