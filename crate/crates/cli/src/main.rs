use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oucl::experiments::{cantor_overlap, default_r_values, lemma23_rows};
use oucl::{check_model, run_experiment, CliError, CliResult, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "oucl", version, about = "Coupling experiments for Levy-driven OU processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        samples: Option<usize>,
        /// Sampling threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Evaluate the model gates only.
    CheckModel { config: PathBuf },
    /// Exact sweep of the reflection inequalities.
    Lemma23 {
        #[arg(long, default_value_t = 12)]
        kmax: usize,
    },
    /// Fat Cantor set and its minimal self-overlap for |z| <= zmax.
    Svc {
        #[arg(long, default_value_t = 10)]
        level: u32,
        #[arg(long, default_value_t = 0.25)]
        removed: f64,
        #[arg(long, default_value_t = 0.1)]
        zmax: f64,
        #[arg(long, default_value_t = 201)]
        grid: usize,
    },
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn execute(cli: Cli) -> CliResult<bool> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            samples,
            workers,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let manifest = run_experiment(
                &cfg,
                &RunOptions {
                    out,
                    seed,
                    samples,
                    workers,
                },
            )?;
            print_json(&manifest);
            Ok(true)
        }
        Command::CheckModel { config } => {
            let check = check_model(&ExperimentConfig::load(&config)?)?;
            print_json(&check);
            if check.passed {
                Ok(true)
            } else {
                Err(CliError::gate(
                    "model gates",
                    "bounded semigroup or overlap condition failed",
                ))
            }
        }
        Command::Lemma23 { kmax } => {
            let (_, summary) = lemma23_rows(kmax, &default_r_values())?;
            print_json(&summary);
            Ok(summary.violations == 0)
        }
        Command::Svc {
            level,
            removed,
            zmax,
            grid,
        } => {
            let res = cantor_overlap(level, removed, zmax, grid)?;
            print_json(&res);
            Ok(res.passed)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
