//! `eqprop` command line: train experiments, export hidden-state
//! trajectories, and run the built-in gradient oracles.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use eqprop::config::ExperimentConfig;
use eqprop::error::CliError;
use eqprop::{oracle, runner};

#[derive(Parser)]
#[command(
    name = "eqprop",
    version,
    about = "Equilibrium-propagation training with standard and dendritic neurons"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a configured experiment over one or more seeds.
    Train {
        /// Path to a JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed list, e.g. --seeds 0,1,2.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Record free-phase hidden-state trajectories for test samples.
    ExportStates {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Test-set sample indices, e.g. --samples 3,5,42.
        #[arg(long, value_delimiter = ',', required = true)]
        samples: Vec<usize>,
    },
    /// Run a verification oracle and write its JSON report.
    Oracle {
        /// One of: finite-diff, ep-vs-bptt, beta-sweep.
        subcommand: String,
        /// Directory for report files.
        #[arg(long, default_value = "oracle_out")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, seeds } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(seeds) = seeds {
                if seeds.is_empty() {
                    return Err(CliError::Usage("--seeds needs at least one seed".into()));
                }
                cfg.seeds = seeds;
            }
            let out = runner::run(&cfg, false)?;
            let (mean, std) = runner::final_test_accuracy(&out.per_seed);
            println!(
                "done: {} seed(s), final test accuracy {:.2} +/- {:.2}%",
                out.per_seed.len(),
                mean,
                std
            );
            println!("summary: {}", out.summary_path.display());
            Ok(())
        }
        Command::ExportStates {
            config,
            checkpoint,
            samples,
        } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let export = runner::export_states(&cfg, &checkpoint, &samples)?;
            for p in &export.trajectory_paths {
                println!("wrote {}", p.display());
            }
            for p in &export.summary_paths {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Oracle { subcommand, out } => {
            let (pass, path) = oracle::run_oracle(&subcommand, &out)?;
            println!(
                "oracle {subcommand}: {} (report: {})",
                if pass { "PASS" } else { "FAIL" },
                path.display()
            );
            if pass {
                Ok(())
            } else {
                Err(CliError::Runtime(format!(
                    "oracle {subcommand} failed its tolerance gate"
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
