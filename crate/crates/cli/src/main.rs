// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use springmass::dynamics::ModelKind;

mod commands;
mod config;
mod manifest;

use config::{parse_resolution, Overrides, RunConfig};

/// Viable and robust sets of spring-mass running models.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// TOML run configuration; flags below take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    model: Option<ModelKind>,
    /// Total energy [J].
    #[arg(long, global = true)]
    energy: Option<f64>,
    /// Grid size as STATESxACTIONS, e.g. 400x400.
    #[arg(long, global = true, value_parser = parse_resolution)]
    resolution: Option<(usize, usize)>,
    /// Action noise half-width [deg].
    #[arg(long, global = true)]
    eta: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true, env = "SPRINGMASS_WORKERS")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the apex transition grid.
    Grid,
    /// Non-failing and viable sets.
    Viable {
        /// Use a saved grid instead of building one.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Viable and robust sets at the configured noise level.
    Robust {
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Fixed points and basins over a range of angles of attack.
    Bifurcate,
    /// Robust set sizes over the configured noise levels.
    SweepNoise,
    /// Robust states over the configured energy levels.
    SweepEnergy,
    /// Particle swarm search for the largest viable set.
    Optimize,
    /// Re-checksum the outputs listed in a manifest.
    Verify { manifest: PathBuf },
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    if let Command::Verify { manifest } = &cli.command {
        let bad = commands::verify(manifest)?;
        return Ok(bad == 0);
    }
    let o = Overrides {
        model: cli.model,
        energy: cli.energy,
        resolution: cli.resolution,
        eta_deg: cli.eta,
        seed: cli.seed,
        out: cli.out.clone(),
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &o)?;
    let manifest = match &cli.command {
        Command::Grid => commands::grid(&cfg)?,
        Command::Viable { grid } => commands::viable(&cfg, grid.as_deref())?,
        Command::Robust { grid } => commands::robust(&cfg, grid.as_deref())?,
        Command::Bifurcate => commands::bifurcate(&cfg)?,
        Command::SweepNoise => commands::sweep_noise(&cfg)?,
        Command::SweepEnergy => commands::sweep_energy(&cfg)?,
        Command::Optimize => commands::optimize(&cfg)?,
        Command::Verify { .. } => unreachable!(),
    };
    log::info!("wrote {}", manifest.display());
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
