//! `nsfmc`: single solves, Monte Carlo ensembles, convergence studies and
//! norm evaluation for the random Navier–Stokes–Fourier system.
//!
//! Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 I/O failure.
//! On failure a one-line JSON error record is printed to stderr and, when the
//! output directory exists, written to `<out>/error.json`.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nsfmc::ensemble::FailurePolicy;
use nsfmc::experiment::StudyMode;
use nsfmc::stats::NormSpec;
use nsfmc::NsfError;

#[derive(Parser)]
#[command(name = "nsfmc", version, about = "Monte Carlo finite volume solver for the random Navier-Stokes-Fourier system")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// JSON configuration file; omitted keys take their defaults
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides the config file
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available hardware parallelism)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Sample cache directory
    #[arg(long, global = true, env = "NSFMC_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "nsfmc-out")]
    out: PathBuf,
    /// What to do when a sample's solve fails
    #[arg(long, global = true, value_enum, default_value = "abort")]
    on_sample_failure: PolicyArg,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum PolicyArg {
    Abort,
    Exclude,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one sample and dump its trajectory
    Solve,
    /// Run a Monte Carlo ensemble and dump mean and deviation fields
    Mc,
    /// Run a convergence study
    Study {
        #[command(subcommand)]
        mode: StudyCommand,
    },
    /// Evaluate norms of a field dump
    Norms {
        fieldfile: PathBuf,
        /// Norms to evaluate (L<p>, Linf, H-<k>)
        #[arg(long = "norm", default_values = ["L1", "L2", "Linf", "H-2"])]
        norms: Vec<NormSpec>,
    },
}

#[derive(Subcommand)]
enum StudyCommand {
    /// Fixed mesh, growing number of samples
    Stat,
    /// Mesh and sample count refined together
    Total,
}

fn exit_code(err: &anyhow::Error) -> (u8, &'static str) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<NsfError>() {
            if e.is_solver_failure() {
                return (3, "solver");
            }
            return match e {
                NsfError::Io(_) | NsfError::Format(_) => (4, "io"),
                NsfError::StepFailed { .. } | NsfError::SampleFailed { .. } => continue,
                _ => (2, "config"),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return (4, "io");
        }
    }
    (2, "config")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let g = cli.global;
    let common = commands::Common {
        config: g.config,
        seed: g.seed,
        workers: g
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
            .max(1),
        cache_dir: g.cache_dir,
        out: g.out,
        policy: match g.on_sample_failure {
            PolicyArg::Abort => FailurePolicy::Abort,
            PolicyArg::Exclude => FailurePolicy::Exclude,
        },
    };
    let result = match &cli.command {
        Command::Solve => commands::solve(&common),
        Command::Mc => commands::mc(&common),
        Command::Study { mode: StudyCommand::Stat } => commands::study(&common, StudyMode::Statistical),
        Command::Study { mode: StudyCommand::Total } => commands::study(&common, StudyMode::Total),
        Command::Norms { fieldfile, norms } => commands::norms(fieldfile, norms),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = exit_code(&err);
            let record = serde_json::json!({
                "status": "error",
                "kind": kind,
                "exit_code": code,
                "message": format!("{err:#}"),
            });
            eprintln!("{record}");
            if common.out.is_dir() {
                let _ = std::fs::write(common.out.join("error.json"), format!("{record}\n"));
            }
            ExitCode::from(code)
        }
    }
}
