mod commands;
mod dataset;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// Error that maps to exit code 2 (bad flags, config, or empty input).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "fredsr", version, about = "Residual Fourier-convolution super-resolution toolkit")]
struct Cli {
    /// Log every training step and per-file progress.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    Bicubic,
    Bilinear,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build `<name>_hr.png` / `<name>_lr.png` training pairs from a folder of images.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        scale: usize,
        /// Crop images whose sides are not multiples of the scale instead of skipping them.
        #[arg(long)]
        crop_multiple: bool,
    },
    /// Train the generator and discriminator on a prepared dataset.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Total step count to reach (resumed runs continue up to it).
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Super-resolve one image with a checkpoint, or with a plain interpolation baseline.
    Upscale {
        #[arg(long, required_unless_present = "baseline")]
        ckpt: Option<PathBuf>,
        #[arg(long, conflicts_with = "ckpt")]
        baseline: Option<Baseline>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Expected scale; must agree with the checkpoint.
        #[arg(long)]
        scale: Option<usize>,
    },
    /// SSIM/PSNR of a checkpoint and/or baseline against prepared HR images.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        baseline: Option<Baseline>,
        /// Measure on BT.601 luma instead of RGB.
        #[arg(long)]
        luma: bool,
        #[arg(long)]
        scale: Option<usize>,
    },
    /// Describe a checkpoint file.
    Inspect {
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Print the default run configuration.
    Config,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Prepare { input, out, scale, crop_multiple } => commands::prepare(&input, &out, scale, crop_multiple),
        Command::Train { data, config, out, steps, seed, resume } => {
            commands::train(commands::TrainArgs { data, config, out, steps, seed, resume })
        }
        Command::Upscale { ckpt, baseline, input, output, scale } => {
            commands::upscale(ckpt.as_deref(), baseline, &input, &output, scale)
        }
        Command::Eval { data, ckpt, baseline, luma, scale } => commands::eval(&data, ckpt.as_deref(), baseline, luma, scale),
        Command::Inspect { ckpt } => commands::inspect(&ckpt),
        Command::Config => {
            print!("{}", fredsr::training::TrainRunConfig::default().to_text());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_usage(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn is_usage(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<UsageError>().is_some() || matches!(c.downcast_ref::<fredsr::Error>(), Some(fredsr::Error::Config(_)))
    })
}
