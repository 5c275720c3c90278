//! `eincm` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 solver failure in at least one sample.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "eincm", version, about = "Edge-informed contrast maximization for event-camera optical flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic translating scene with exact ground truth.
    Synth(SynthArgs),
    /// Estimate optical flow for every event window.
    Estimate(EstimateArgs),
    /// Compare predicted flow files against ground truth.
    Evaluate(EvaluateArgs),
    /// Run the edge extraction pipeline on images.
    Edges(EdgesArgs),
}

/// Configuration source shared by the commands that run the estimator.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Named hyperparameter preset: mvsec-indoor, mvsec-outdoor, ecd, dsec.
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// TOML scene description; flags below override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// bar, checkerboard or texture.
    #[arg(long)]
    pub pattern: Option<String>,
    /// Horizontal velocity (px/s).
    #[arg(long, allow_negative_numbers = true)]
    pub vx: Option<f64>,
    /// Vertical velocity (px/s).
    #[arg(long, allow_negative_numbers = true)]
    pub vy: Option<f64>,
    /// Window length (s).
    #[arg(long)]
    pub duration: Option<f64>,
    /// Contrast threshold on log intensity.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Spurious events per pixel per second.
    #[arg(long)]
    pub noise_rate: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Event text file (`t x y p` per line).
    #[arg(long, value_name = "PATH")]
    pub events: Option<PathBuf>,
    /// Frame directory with an `images.txt` index (`t relative/path` per line).
    #[arg(long, value_name = "DIR")]
    pub frames: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Ignore frames and maximize event contrast only.
    #[arg(long)]
    pub events_only: bool,
    /// Events per sample window.
    #[arg(long, value_name = "N")]
    pub n_events: Option<usize>,
    /// Also write flow-color PNGs.
    #[arg(long)]
    pub viz: bool,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Predicted `.flo` file or directory.
    #[arg(long, value_name = "PATH")]
    pub pred: PathBuf,
    /// Ground-truth `.flo` file or directory.
    #[arg(long, value_name = "PATH")]
    pub gt: PathBuf,
    /// Events used to add the flow warp loss column.
    #[arg(long, value_name = "PATH")]
    pub events: Option<PathBuf>,
    /// Events per window when `--events` is given.
    #[arg(long, value_name = "N", default_value_t = 30_000)]
    pub n_events: usize,
    /// Write the CSV report here instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EdgesArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Image file or directory of images.
    #[arg(long, value_name = "PATH")]
    pub frames: PathBuf,
    /// Output directory for edge PGMs.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Edges(a) => commands::edges(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
