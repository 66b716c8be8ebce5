//! `hdl`: experiment runner for the heatmap decoding library.

mod commands;
mod config;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "hdl", version, about = "Heatmap decoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML config; built-in defaults are used for missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Gradient-descent dynamics of each loss from each initial heatmap.
    ToySim {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Raw and compensated soft-argmax error over blob locations and betas.
    BiasSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Randomized check of the detection/regression expected-EPE inequality.
    EpeVerify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Optimal predicted spread and Bhattacharyya curves.
    SigmaLab {
        #[command(flatten)]
        common: Common,
    },
    /// Chi-square Gaussian template fits of heatmap files.
    Chi2 {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        beta: Option<f64>,
        /// Heatmap files, replacing the config list.
        #[arg(long = "heatmap")]
        heatmaps: Vec<PathBuf>,
    },
    /// Finite-difference checks of the regression gradients.
    GradCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Difficulty split counts and per-cell EPE for an annotation file.
    Split {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
}

/// A completed run whose checks did not hold.
#[derive(Debug)]
pub struct VerificationFailure(pub String);

impl std::fmt::Display for VerificationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for VerificationFailure {}

fn init_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("HDL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| anyhow::anyhow!("HDL_THREADS must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        anyhow::bail!("HDL_THREADS must be a positive integer, got 0");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn dispatch(cmd: Command) -> anyhow::Result<()> {
    use commands::*;
    match cmd {
        Command::ToySim { common, seed, beta, gamma, iterations } => {
            toy_sim::run(&common, toy_sim::Overrides { seed, beta, gamma, iterations })
        }
        Command::BiasSweep { common, beta } => bias_sweep::run(&common, beta),
        Command::EpeVerify { common, seed, trials } => epe_verify::run(&common, seed, trials),
        Command::SigmaLab { common } => sigma_lab::run(&common),
        Command::Chi2 { common, beta, heatmaps } => chi2::run(&common, beta, heatmaps),
        Command::GradCheck { common, seed, beta, trials } => grad_check::run(&common, seed, beta, trials),
        Command::Split { common, annotations, predictions } => split::run(&common, annotations, predictions),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| dispatch(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(v) = e.downcast_ref::<VerificationFailure>() {
                eprintln!("verification failed: {v}");
                ExitCode::from(1)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        }
    }
}
