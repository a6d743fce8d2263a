use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod data;

#[derive(Parser, Debug)]
#[command(name = "bruno", version, about = "Exchangeable sequence models with coupling flows")]
struct Cli {
    /// Seed for every random choice; overrides the `seed` config key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

/// Where items come from: an IDX image/label pair, or the data section of a
/// config file (synthetic data by default).
#[derive(Args, Debug, Clone, Default)]
struct DataArgs {
    /// key = value file; only its data keys are used here.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    /// Add 90/180/270 degree rotations of each class as new classes.
    #[arg(long)]
    rotate: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model; extra `--key value` pairs override config keys.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for checkpoints, loss trace and resolved config.
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
        overrides: Vec<String>,
    },
    /// Draw samples, optionally conditioned on items of one class.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Class whose items are conditioned on.
        #[arg(long)]
        class: Option<usize>,
        /// Number of conditioning items.
        #[arg(long, default_value_t = 0)]
        context: usize,
        #[arg(long, default_value_t = 16)]
        count: usize,
        /// Grid columns for image output.
        #[arg(long, default_value_t = 8)]
        cols: usize,
        /// Output path: `.pgm`/`.ppm` writes a grid, anything else CSV.
        #[arg(long, default_value = "samples.pgm")]
        out: PathBuf,
    },
    /// n-shot k-way classification accuracy.
    Fewshot {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
    },
    /// Discriminative fine-tuning on n-shot k-way episodes.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        #[arg(long, default_value_t = 8)]
        episodes_per_step: usize,
        #[arg(long, default_value_t = 1e-4)]
        learning_rate: f64,
        #[arg(long, default_value = "finetuned.ckpt")]
        out: PathBuf,
    },
    /// Online set-membership scores for a stream.
    Anomaly {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// IDX image file scored in order; otherwise a stream is drawn from
        /// `--class` with one item of `--outlier-class` planted.
        #[arg(long)]
        stream: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        class: usize,
        #[arg(long, default_value_t = 20)]
        length: usize,
        #[arg(long)]
        outlier_class: Option<usize>,
        /// Position of the planted item; random (at least 6) when omitted.
        #[arg(long)]
        outlier_at: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value = "scores.csv")]
        out: PathBuf,
    },
    /// Per-dimension correlation and degrees-of-freedom report.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory for `dims.csv` and `exceedance.csv`; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train Gaussian and Student-t variants side by side and write both
    /// loss traces.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "compare")]
        out: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
        overrides: Vec<String>,
    },
    /// Consistency checks of this build.
    Selftest,
}

/// Failures mapped to exit codes: usage errors exit 2, everything else 1.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
