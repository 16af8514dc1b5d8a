//! `tta`: filters, corruption, dataset synthesis, training, adaptation runs,
//! evaluation and report tables.
//!
//! Exit status is 0 on success, 1 for usage and configuration errors, 2 for
//! failures while running.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Policy;

#[derive(Parser, Debug)]
#[command(name = "tta", version, about = "Bi-level test-time adaptation pipeline")]
pub struct Cli {
    /// Seed for synthesis and training; commands that read a dataset default to its seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Flat TOML config file; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory that receives every output file.
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Apply defog, gamma, contrast and exposure filters to an image.
    Filter(FilterArgs),
    /// Add synthetic fog or low light to an image.
    Corrupt(CorruptArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Train a source detector on a dataset.
    Train(TrainArgs),
    /// Stream a dataset through the detector in one mode; writes metrics, detections and a checkpoint.
    Adapt(AdaptArgs),
    /// Score a detections file against a dataset.
    Eval(EvalArgs),
    /// Print metrics files as one table.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    /// Input PNG or PPM image.
    pub input: PathBuf,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "filtered.png")]
    pub output: PathBuf,
    /// Degree of defogging in [0, 1]; 0 skips the defog stage.
    #[arg(long, default_value_t = 0.0)]
    pub defog_w: f64,
    /// Fraction of pixels averaged into the atmospheric light.
    #[arg(long, default_value_t = 0.001)]
    pub alpha_frac: f64,
    /// Dark-channel window side (odd).
    #[arg(long, default_value_t = 15)]
    pub window: usize,
    /// Lower bound on transmission.
    #[arg(long, default_value_t = 0.1)]
    pub t_floor: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub contrast: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub exposure: f64,
}

#[derive(Args, Debug)]
pub struct CorruptArgs {
    /// Input PNG or PPM image.
    pub input: PathBuf,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "corrupted.png")]
    pub output: PathBuf,
    /// Fog intensity level 1-9.
    #[arg(long, conflicts_with_all = ["beta", "lowlight"])]
    pub fog: Option<u8>,
    /// Fog scattering coefficient.
    #[arg(long, conflicts_with = "lowlight")]
    pub beta: Option<f64>,
    /// Airlight used with --beta.
    #[arg(long, default_value_t = 0.5, requires = "beta")]
    pub airlight: f64,
    /// Low-light exponent.
    #[arg(long)]
    pub lowlight: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    /// A continual sequence of domain segments.
    Sequence,
    /// Independent clean training scenes.
    Train,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = DatasetKind::Sequence)]
    pub kind: DatasetKind,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub frames_per_segment: Option<usize>,
    /// Comma-separated domains, e.g. clean,fog:5,lowlight:3,clean.
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<String>>,
    /// Number of frames of a training dataset.
    #[arg(long)]
    pub train_frames: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset manifest.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub policy: Option<Policy>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "model.txt")]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct AdaptArgs {
    /// Dataset manifest of a sequence.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Source model file.
    #[arg(long, conflicts_with = "checkpoint")]
    pub model: Option<PathBuf>,
    /// Resume from an adaptation checkpoint instead of a source model.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// frozen, detector_adapt, image_adapt or bilevel.
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Dataset manifest of a sequence.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Detections file, one `frame class x1 y1 x2 y2 score` record per line.
    #[arg(long)]
    pub detections: PathBuf,
    /// Mode recorded in the metrics file.
    #[arg(long)]
    pub mode: Option<String>,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "eval.metrics.json")]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Metrics files written by `adapt` or `eval`.
    #[arg(required = true)]
    pub metrics: Vec<PathBuf>,
    /// Average files of the same mode into one row.
    #[arg(long)]
    pub average: bool,
    /// Also write the table to this file inside the output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// A usage or configuration error.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.is::<UsageError>() || matches!(e.downcast_ref::<tta_core::Error>(), Some(tta_core::Error::InvalidParameter { .. }))
    });
    if usage {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
