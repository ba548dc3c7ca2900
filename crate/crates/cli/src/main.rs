use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use echo_cli::check::{check_table, run_checks, CheckResult};
use echo_cli::plot::{plot, PlotKind};
use echo_cli::{run_file, CliError, RunOptions};

#[derive(Parser)]
#[command(name = "echo-lab", version, about = "Semiclassical echo and revival experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its table and manifest.
    Run {
        scenario: PathBuf,
        /// Maximum number of sweep items computed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Compute sweep items one at a time, in order.
        #[arg(long)]
        deterministic: bool,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a result table as SVG.
    Plot {
        table: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// Image path; defaults to the table path with an .svg extension.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the symplectic invariant suite and print the results.
    Check {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("echo-lab: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            jobs,
            deterministic,
            out,
        } => {
            let opts = RunOptions { jobs, deterministic, out };
            match run_file(&scenario, &opts) {
                Ok(outcome) => {
                    println!("table: {}", outcome.table.display());
                    println!("manifest: {}", outcome.manifest.display());
                    if let Some(p) = &outcome.plot {
                        println!("plot: {}", p.display());
                    }
                    println!("status: {}", outcome.status.as_str());
                    for e in &outcome.errors {
                        eprintln!("echo-lab: {e}");
                    }
                    ExitCode::from(outcome.status.exit_code() as u8)
                }
                Err(e) => fail(e),
            }
        }
        Command::Plot { table, kind, output } => {
            let out = output.unwrap_or_else(|| table.with_extension("svg"));
            match plot(&table, kind, &out) {
                Ok(()) => {
                    println!("plot: {}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Check { samples, seed } => {
            if samples == 0 {
                return fail(CliError::Validation("--samples: must be positive".into()));
            }
            match run_checks(samples, seed) {
                Ok(results) => {
                    let bytes = check_table(&results).to_bytes().expect("in-memory table");
                    print!("{}", String::from_utf8_lossy(&bytes));
                    if results.iter().all(CheckResult::pass) {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(3)
                    }
                }
                Err(e) => fail(e),
            }
        }
    }
}
