use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use ug_cli::commands;
use ug_cli::config::ExperimentConfig;
use ug_core::error::{Error, Result};

/// Resolution-upscaled diffusion sampling experiments.
#[derive(Parser)]
#[command(name = "ug", version, about)]
struct Cli {
    /// Experiment configuration file (flat key = value lines); omitted
    /// keys take their defaults, and omitting the file runs pure defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the configured base seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads for parallel cells/trajectories (0 = automatic).
    /// Output bytes are identical for every worker count.
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    workers: usize,

    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the adjusted-time / power-factor table for the schedule.
    TauTable,
    /// Sample guided target-resolution and plain trained-resolution sets.
    Sample,
    /// Score a (theta, eta) grid against a trained-resolution reference.
    Sweep,
    /// Toggle the two adjustments over identical seeds and compare.
    Ablate,
    /// Sample frame stacks with a temporal scale plan.
    Temporal,
}

// clap's derive wants the subcommand field inside the struct; keeping the
// enum separate keeps the global flags in one place above it.
#[derive(Parser)]
struct Full {
    #[command(flatten)]
    cli: Cli,
    #[command(subcommand)]
    command: Command,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::InvalidConfig(format!("cannot read {}: {e}", path.display()))
            })?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(full: &Full) -> Result<()> {
    let cfg = load_config(&full.cli)?;
    if full.cli.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(full.cli.workers)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    }
    let t0 = Instant::now();
    match full.command {
        Command::TauTable => commands::cmd_tau_table(&cfg)?,
        Command::Sample => commands::cmd_sample(&cfg)?,
        Command::Sweep => commands::cmd_sweep(&cfg)?,
        Command::Ablate => commands::cmd_ablate(&cfg)?,
        Command::Temporal => commands::cmd_temporal(&cfg)?,
    }
    println!("total wall time: {:.3}s", t0.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    let full = Full::parse();
    match run(&full) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ug_cli::exit_code(&e))
        }
    }
}
