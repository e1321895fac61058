use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use consensus_bvp_cli::run::{run, Overrides};
use consensus_bvp_cli::validate::validate;

/// Consensus averaging with fixed-value boundary nodes.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding `output_dir` in the config.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Master seed, overriding `master_seed` in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Print nothing on success.
        #[arg(long)]
        quiet: bool,
    },
    /// Check a config, graph, schedule or scenario file without running it.
    Validate { path: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            output,
            seed,
            quiet,
        } => match run(&config, &Overrides { output, seed }) {
            Ok(outcome) => {
                if !quiet {
                    println!("{}", outcome.summary);
                    println!(
                        "wrote {} to {}",
                        outcome.artifacts.join(", "),
                        outcome.output_dir.display()
                    );
                }
                ExitCode::SUCCESS
            }
            Err(failure) => {
                eprintln!("error: {failure}");
                ExitCode::from(failure.exit_code() as u8)
            }
        },
        Command::Validate { path } => match validate(&path) {
            Ok(report) => {
                for check in &report.checks {
                    println!("{check}");
                }
                if report.passed() {
                    ExitCode::SUCCESS
                } else {
                    eprintln!("failed checks: {}", report.failed().join(", "));
                    ExitCode::from(2)
                }
            }
            Err(failure) => {
                eprintln!("error: {failure}");
                ExitCode::from(failure.exit_code() as u8)
            }
        },
    }
}
