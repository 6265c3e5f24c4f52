use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracstab::Error;

mod commands;
mod io;

/// Fractional heatmap coding and landmark stabilization experiments.
#[derive(Debug, Parser)]
#[command(name = "fracstab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic train/test benchmark.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train_videos: Option<usize>,
        #[arg(long)]
        test_videos: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        /// Comma-separated coordinate noise levels in pixels.
        #[arg(long, value_delimiter = ',')]
        noise_levels: Option<Vec<f64>>,
    },
    /// Render a trajectory file to one heatmap stack per frame.
    Encode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        /// fractional | rounded
        #[arg(long)]
        render: Option<String>,
    },
    /// Decode a directory written by `encode` back to a trajectory file.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// fhr | chr
        #[arg(long)]
        mode: Option<String>,
    },
    /// Fit stabilizer parameters on a benchmark split.
    #[command(allow_negative_numbers = true)]
    Train {
        #[command(flatten)]
        common: Common,
        /// Benchmark directory written by `simulate`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        lambda1: Option<f64>,
        #[arg(long)]
        lambda2: Option<f64>,
        #[arg(long)]
        lambda3: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        max_evals: Option<usize>,
        /// map-candidates | posterior-mean
        #[arg(long)]
        mode: Option<String>,
    },
    /// Run a stabilizer or baseline over detector trajectories.
    Stabilize {
        #[command(flatten)]
        common: Common,
        /// A `*.z.json` file or a directory of them.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, conflicts_with = "baseline")]
        params: Option<PathBuf>,
        /// `kind[:param]`, e.g. `moving_average:5`.
        #[arg(long)]
        baseline: Option<String>,
    },
    /// Score methods against ground truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: Option<String>,
        /// `gt`, `raw`, `params:<file>` or `baseline:<kind>[:param]`;
        /// repeatable.
        #[arg(long = "method")]
        methods: Vec<String>,
        #[arg(long)]
        threshold: Option<f64>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numerical(String),
    Io(PathBuf, std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io(..) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Config(_) | Error::InvalidParams(_) | Error::InvalidGrid(_) => CliError::Config(message),
            Error::NonFinite(_) | Error::NoPrior { .. } => CliError::Numerical(message),
            Error::Format { .. }
            | Error::Shape(_)
            | Error::Json(_)
            | Error::Io(_)
            | Error::OutOfDomain { .. }
            | Error::OutOfFrame { .. }
            | Error::InvalidHeatmap(_)
            | Error::InsufficientData(_) => CliError::Data(message),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            common,
            train_videos,
            test_videos,
            frames,
            noise_levels,
        } => commands::simulate(&common, train_videos, test_videos, frames, noise_levels),
        Command::Encode {
            common,
            input,
            width,
            height,
            scale,
            sigma,
            render,
        } => commands::encode(&common, &input, width, height, scale, sigma, render),
        Command::Decode { common, input, mode } => commands::decode(&common, &input, mode),
        Command::Train {
            common,
            data,
            split,
            lambda1,
            lambda2,
            lambda3,
            max_iters,
            max_evals,
            mode,
        } => commands::train(
            &common,
            &data,
            commands::TrainOverrides {
                split,
                lambda1,
                lambda2,
                lambda3,
                max_iters,
                max_evals,
                mode,
            },
        ),
        Command::Stabilize {
            common,
            input,
            params,
            baseline,
        } => commands::stabilize(&common, &input, params, baseline),
        Command::Evaluate {
            common,
            data,
            split,
            methods,
            threshold,
        } => commands::evaluate(&common, &data, split, methods, threshold),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fracstab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
