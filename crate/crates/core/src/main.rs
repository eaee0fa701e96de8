use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use dynpsse::harness::{emit_reports, run_scenario, Estimator, Scenario};

#[derive(Parser)]
#[command(
    name = "dynpsse",
    version,
    about = "Moving-horizon vs EKF dynamic state estimation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the replication count.
        #[arg(long)]
        reps: Option<usize>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated subset of `mhe,ekf`.
        #[arg(long, value_delimiter = ',')]
        estimators: Option<Vec<Estimator>>,
        /// Also write per-window wall-clock times to timing.csv.
        #[arg(long)]
        timing: bool,
    },
    /// Parse and validate a scenario without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(config: &Path) -> anyhow::Result<Scenario> {
    Scenario::load(config).with_context(|| format!("invalid scenario {}", config.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Validate { config } => {
            let s = load(&config)?;
            println!(
                "ok: {} buses, {} measurements, horizon {}, {} windows, {} replications",
                s.grid.bus_count,
                s.plan.len(),
                s.horizon,
                s.window_count(),
                s.replications
            );
        }
        Command::Run {
            config,
            seed,
            reps,
            out,
            estimators,
            timing,
        } => {
            let mut s = load(&config)?;
            if let Some(seed) = seed {
                s.seed = seed;
                if let dynpsse::mhe::Extraction::Randomized { count, .. } = s.mhe.extraction {
                    s.mhe.extraction = dynpsse::mhe::Extraction::Randomized { count, seed };
                }
            }
            if let Some(reps) = reps {
                anyhow::ensure!(reps >= 1, "--reps must be at least 1");
                s.replications = reps;
            }
            if let Some(out) = out {
                s.output = out;
            }
            if let Some(estimators) = estimators {
                s.estimators = estimators;
                s.estimators.dedup();
            }
            let result = run_scenario(&s)?;
            emit_reports(&result, &s.output, timing)?;
            for summary in &result.summaries {
                println!(
                    "{}: mean rmse {:.6}, divergence rate {:.3}",
                    summary.estimator, summary.mean_rmse, summary.divergence_rate
                );
            }
            println!("reports written to {}", s.output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
