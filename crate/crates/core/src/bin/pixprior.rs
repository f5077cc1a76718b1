use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pixprior::harness::{self, load_image};
use pixprior::{metrics, Result};

#[derive(Parser)]
#[command(name = "pixprior", version, about = "Prior-driven reconstruction for simulated computational cameras")]
struct Cli {
    /// Override the seed given in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config: simulate, reconstruct, write metrics.
    Run { config: PathBuf },
    /// Write synthetic texture patches as PGM files.
    GenTextures { spec: PathBuf },
    /// Train the autoregressive prior and write a checkpoint.
    TrainPrior { config: PathBuf },
    /// Print PSNR and SSIM of an estimate against a reference image.
    Eval { reference: PathBuf, estimate: PathBuf },
    /// Print the comparison table of a finished run directory.
    Table { dir: PathBuf },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => {
            let text = std::fs::read_to_string(&config)?;
            let mut cfg = harness::ExperimentConfig::from_toml(&text)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let base = config.parent().unwrap_or(std::path::Path::new("."));
            let summary = harness::run_config(&cfg, base)?;
            println!("{}", summary.metrics_path.display());
        }
        Command::GenTextures { spec } => {
            let paths = harness::run_texture_job(&spec, cli.seed)?;
            println!("wrote {} patches", paths.len());
        }
        Command::TrainPrior { config } => {
            let s = harness::run_train_job(&config, cli.seed)?;
            println!(
                "held-out bits/dim: {:.4} (initial {:.4}, histogram {:.4}, best epoch {})",
                s.report.final_bits_per_dim,
                s.report.initial_bits_per_dim,
                s.histogram_bits_per_dim,
                s.report.best_epoch
            );
        }
        Command::Eval { reference, estimate } => {
            let report = metrics::evaluate(&load_image(reference)?, &load_image(estimate)?)?;
            let json = serde_json::to_string(&report).map_err(|e| pixprior::Error::Format(e.to_string()))?;
            println!("{json}");
        }
        Command::Table { dir } => print!("{}", harness::table_for_dir(dir)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
