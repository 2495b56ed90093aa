use std::path::PathBuf;
use std::process::ExitCode;

use ccsl_cli::commands::{evaluate, fit, generate, sweep};
use ccsl_cli::Options;
use clap::{Parser, Subcommand};

/// Causal cluster structure learning on multi-subject time series.
#[derive(Parser)]
#[command(name = "ccsl", version)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; drawn from entropy and recorded when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Leave timestamps and timings out of the outputs.
    #[arg(long, global = true)]
    reproducible: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel directory with its ground truth.
    Generate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster a panel directory and learn each cluster's structure.
    Fit {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a fit result against ground truth.
    Evaluate {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run generate, fit and evaluate over a grid of settings.
    Sweep {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = Options {
        config: cli.config,
        seed: cli.seed,
        reproducible: cli.reproducible,
    };
    let outcome = match &cli.command {
        Command::Generate { out } => {
            generate(&opts, out).map(|p| println!("wrote {}", p.display()))
        }
        Command::Fit { panel, out } => fit(&opts, panel, out).map(|f| {
            println!(
                "clusters {} sweeps {} converged {}",
                f.q_estimated, f.sweeps_run, f.converged
            )
        }),
        Command::Evaluate { fit, truth, out } => evaluate(&opts, fit, truth, out)
            .map(|e| println!("ari {:.4} auc {:?}", e.report.ari, e.mean_auc_combined)),
        Command::Sweep { out } => sweep(&opts, out).map(|rows| {
            let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
            println!("{} rows, {} failed", rows.len(), failed)
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
