use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use polling_lab::config::{ExperimentConfig, OutputFormat};
use polling_lab::experiments;
use polling_lab::Result;

/// Run a polling-system experiment described by a TOML file.
#[derive(Debug, Parser)]
#[command(name = "polling-lab", version)]
struct Args {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

fn execute(args: &Args) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.sim.master_seed = seed;
    }
    if let Some(reps) = args.reps {
        cfg.sim.replications = reps;
    }
    let format = args.format.unwrap_or(cfg.format);
    let out = args.out.clone().or_else(|| cfg.output.clone());
    let report = experiments::run(&cfg)?;
    report.write(format, out.as_deref())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
