use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use abm_calib::commands::{self, CalibrateOptions};
use abm_calib::{CliError, EXIT_OK};
use abm_calib_core::Execution;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "abm-calib", version, about = "Bayesian-optimization calibration of activity-based travel models")]
struct Cli {
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a commented config, a 24-parameter space and toy targets.
    Init {
        #[arg(long, default_value = "abm-calib.toml")]
        config: PathBuf,
        /// Overwrite existing files.
        #[arg(long)]
        force: bool,
    },
    /// Run the calibration and write archives and reports.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        /// Continue interrupted runs from their archives.
        #[arg(long)]
        resume: bool,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of runs.
        #[arg(long)]
        runs: Option<usize>,
        /// Discard existing run archives in the output directory.
        #[arg(long)]
        force: bool,
        /// Disable data parallelism.
        #[arg(long)]
        sequential: bool,
    },
    /// Score one parameter file and print a report row.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// CSV with header `name,value`.
        #[arg(long)]
        params: PathBuf,
    },
    /// Print the Pareto front of one or more report files.
    Pareto {
        /// Supplies the feasibility thresholds; defaults apply without it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Rebuild best.csv, trace.csv and pareto_report.csv from archives.
    Report {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Init { config, force } => {
            for p in commands::init(&config, force)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Calibrate {
            config,
            resume,
            seed,
            runs,
            force,
            sequential,
        } => {
            let stop = Arc::new(AtomicBool::new(false));
            let flag = stop.clone();
            if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::Relaxed)) {
                tracing::warn!("interrupts will not stop runs cleanly: {e}");
            }
            let opts = CalibrateOptions {
                resume,
                force,
                seed,
                runs,
                exec: if sequential {
                    Execution::Sequential
                } else {
                    Execution::Parallel
                },
                stop: Some(stop),
            };
            let outcome = commands::calibrate(&config, &opts)?;
            print!("{}", outcome.report.summary());
            for (id, msg) in &outcome.failed_runs {
                eprintln!("run {id} failed: {msg}");
            }
        }
        Command::Evaluate { config, params } => {
            print!("{}", commands::evaluate(&config, &params)?);
        }
        Command::Pareto { config, inputs } => {
            let (csv, skipped) = commands::pareto(config.as_deref(), &inputs)?;
            if skipped > 0 {
                eprintln!("skipped {skipped} row(s) without criteria");
            }
            print!("{csv}");
        }
        Command::Report { config } => {
            print!("{}", commands::report(&config)?.summary());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(if cli.quiet {
            tracing::Level::WARN
        } else {
            tracing::Level::INFO
        })
        .init();
    match run(cli) {
        Ok(()) => ExitCode::from(EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
