use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use sde_infer::{
    cmd_map, cmd_reproduce_paper, cmd_sample, cmd_simulate, cmd_validate, init_thread_pool,
    CliError, RunConfig,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    /// Simulate a trajectory and extract discrete observations.
    Simulate,
    /// Sample the posterior with whitened pCN and write estimators.
    Sample,
    /// Recompute the MAP estimate from stored samples.
    Map,
    /// Run the cross-oracle validation suites.
    Validate,
    /// Bundle the full experiment: simulate, sample, estimate, plot data.
    ReproducePaper,
}

impl Mode {
    fn as_str(&self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Sample => "sample",
            Mode::Map => "map",
            Mode::Validate => "validate",
            Mode::ReproducePaper => "reproduce-paper",
        }
    }
}

/// Bayesian inference of drift and diffusion coefficients for reflected
/// diffusions on [0,1] from discrete observations.
#[derive(Parser)]
#[command(name = "sde-infer", version)]
struct Args {
    #[arg(value_enum)]
    mode: Mode,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Rerun the likelihood through the k-mode truncation (sample mode).
    #[arg(long)]
    truncate: Option<usize>,
    /// Skip the slow parametrix suite (validate mode).
    #[arg(long)]
    quick: bool,
    /// Observations file (defaults to <out_dir>/observations.json).
    #[arg(long)]
    observations: Option<PathBuf>,
}

fn run(args: &Args) -> Result<(), CliError> {
    let cfg = RunConfig::load(&args.config, args.mode.as_str(), args.seed)?;
    match args.mode {
        Mode::Simulate => {
            cmd_simulate(&cfg)?;
        }
        Mode::Sample => {
            cmd_sample(&cfg, args.observations.as_deref(), args.truncate)?;
        }
        Mode::Map => {
            cmd_map(&cfg, args.observations.as_deref())?;
        }
        Mode::Validate => {
            let report = cmd_validate(&cfg, args.quick)?;
            if let Some(failure) = report.first_failure() {
                return Err(CliError::Suite(failure));
            }
        }
        Mode::ReproducePaper => {
            cmd_reproduce_paper(&cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    init_thread_pool();
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
