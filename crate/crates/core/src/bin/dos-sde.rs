use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dos_sde::harness::{self, ExperimentConfig};
use dos_sde::{DosError, Result};

#[derive(Parser)]
#[command(
    name = "dos-sde",
    version,
    about = "Domain-shift diffusion experiments"
)]
struct Cli {
    /// Experiment config (JSON); defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Forward-process curves, moments and trajectories.
    Forward,
    /// Run the configured sampler.
    Sample,
    /// Sample quality across pivot fractions.
    SweepT1 {
        /// Comma-separated fractions of the horizon.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
    /// Orders 1 to 3 at a fixed step count.
    SweepOrder,
    /// 2-D score field on a grid.
    Scorefield {
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Train the toy network.
    Train,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    match &cli.command {
        Command::SweepT1 { fractions: Some(f) } => cfg.sweep.fractions = f.clone(),
        Command::Scorefield { t, resolution } => {
            if let Some(t) = t {
                cfg.scorefield.t = *t;
            }
            if let Some(r) = resolution {
                cfg.scorefield.resolution = *r;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    let out = cfg.out.clone();
    let summary = match cli.command {
        Command::Forward => harness::cmd_forward(&cfg, &out)?,
        Command::Sample => harness::cmd_sample(&cfg, &out)?,
        Command::SweepT1 { .. } => harness::cmd_sweep_t1(&cfg, &out)?,
        Command::SweepOrder => harness::cmd_sweep_order(&cfg, &out)?,
        Command::Scorefield { .. } => harness::cmd_scorefield(&cfg, &out)?,
        Command::Train => harness::cmd_train(&cfg, &out)?,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::FAILURE
        }
    }
}

fn report(e: &DosError) {
    let body = serde_json::json!({ "kind": e.kind(), "message": e.to_string() });
    eprintln!("{body}");
}
