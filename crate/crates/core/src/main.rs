use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use grane_core::experiment::{constants_for, run_config_file, validate_config, ExperimentConfig, ExperimentError};

/// Distributed Nash-equilibrium seeking experiments (GRANE / Acc-GRANE).
#[derive(Parser)]
#[command(name = "grane", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every solver in the config and write traces, summary and plot data.
    Run { config: PathBuf },
    /// Check the config without solving; prints errors and warnings.
    Validate { config: PathBuf },
    /// Print the augmented constants and condition-number report.
    Constants { config: PathBuf },
}

fn fail(e: ExperimentError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => match run_config_file(&config) {
            Ok((outcome, written)) => {
                for run in &outcome.summary.runs {
                    println!(
                        "{:<24} iterations {:>8}  normalized residual {:.3e}",
                        run.name, run.iterations, run.final_residuals.normalized_residual
                    );
                }
                for path in written {
                    println!("wrote {}", path.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Validate { config } => match validate_config(&config) {
            Ok(report) => {
                for e in &report.errors {
                    println!("error: {e}");
                }
                for w in &report.warnings {
                    println!("warning: {w}");
                }
                if report.errors.is_empty() {
                    if report.warnings.is_empty() {
                        println!("ok");
                    }
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(2)
                }
            }
            Err(e) => fail(e),
        },
        Command::Constants { config } => {
            match ExperimentConfig::load(&config).and_then(|c| constants_for(&c)) {
                Ok(out) => {
                    println!("{}", serde_json::to_string_pretty(&out).expect("report serializes"));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
    }
}
