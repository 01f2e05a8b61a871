use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use corrotdr_cli::commands::{self, CdSweepOptions};
use corrotdr_cli::config::Overrides;

#[derive(Parser)]
#[command(
    name = "corrotdr",
    version,
    about = "Correlation-OTDR simulation and sub-sample fiber latency analysis"
)]
struct Cli {
    /// Worker threads for simulation and subset analysis (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonRunArgs {
    /// Run configuration (TOML); omit for the built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long)]
    out: PathBuf,

    /// Override the capture RNG seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the trace count (and traces per wavelength for sweeps).
    #[arg(long)]
    traces: Option<usize>,

    /// Desk-scale preset: 10 GS/s, 2.5 Gbit/s, 100 traces.
    #[arg(long)]
    lite: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trace set and write it to disk.
    Simulate(CommonRunArgs),

    /// Average a stored trace set and report the recovered latencies.
    Analyze {
        /// Trace set directory produced by `simulate`.
        traceset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also dump the full filtered correlation as CSV.
        #[arg(long)]
        dump_correlation: bool,
    },

    /// Re-evaluate a trace set in subsets and report the consistency RMS per
    /// subset size.
    RmsStudy {
        traceset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset sizes; defaults to the stored config.
        #[arg(long, value_delimiter = ',')]
        subset_sizes: Vec<usize>,
    },

    /// Multi-wavelength dispersion measurement: simulate per-wavelength
    /// trace sets, compensate drift, fit and compare against the reference.
    CdSweep {
        #[command(flatten)]
        run: CommonRunArgs,
        /// Two-column reference dispersion file (lambda_nm, D ps/nm/km);
        /// defaults to the configured channel dispersion.
        #[arg(long)]
        reference_file: Option<PathBuf>,
        /// Skip the drift compensation stage.
        #[arg(long)]
        no_drift_compensation: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("CORROTDR_LOG")).init();
    let cli = Cli::parse();

    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            log::warn!("could not size the worker pool: {e}");
        }
    }

    let result = match &cli.command {
        Command::Simulate(run) => {
            let overrides = Overrides {
                seed: run.seed,
                traces: run.traces,
                lite: run.lite,
            };
            commands::cmd_simulate(run.config.as_deref(), &run.out, &overrides)
        }
        Command::Analyze {
            traceset,
            out,
            dump_correlation,
        } => commands::cmd_analyze(traceset, out, *dump_correlation),
        Command::RmsStudy {
            traceset,
            out,
            subset_sizes,
        } => commands::cmd_rms_study(traceset, out, subset_sizes),
        Command::CdSweep {
            run,
            reference_file,
            no_drift_compensation,
        } => {
            let overrides = Overrides {
                seed: run.seed,
                traces: run.traces,
                lite: run.lite,
            };
            let options = CdSweepOptions {
                reference_file: reference_file.clone(),
                no_drift_compensation: *no_drift_compensation,
            };
            commands::cmd_cd_sweep(run.config.as_deref(), &run.out, &overrides, &options)
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
