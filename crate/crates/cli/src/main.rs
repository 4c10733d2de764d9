use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use wamct_cli::{compare_runs, run_experiment, simulate, RunConfig};

#[derive(Parser)]
#[command(
    name = "wamct",
    version,
    about = "AM and wavelet-AM transmission CT reconstruction"
)]
struct Cli {
    /// Worker threads for the solvers (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the simulation seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate data and run the configured solvers.
    Run { config: PathBuf },
    /// Simulate data only.
    Simulate { config: PathBuf },
    /// Compare two solver output directories.
    Compare { dir_a: PathBuf, dir_b: PathBuf },
    /// Print the default configuration.
    DefaultConfig,
}

fn load(path: &Path, cli: &Cli) -> Result<RunConfig> {
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.simulation.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output.directory = out.clone();
    }
    Ok(config)
}

fn main_inner(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Run { config } => {
            let config = load(config, &cli)?;
            let summary = run_experiment(&config)?;
            println!("wrote {}", summary.directory.display());
            if let Some(v) = summary.am_final {
                println!("am final objective {v:e}");
            }
            if let Some(v) = summary.wam_final {
                println!("wam final objective {v:e}");
            }
        }
        Command::Simulate { config } => {
            let config = load(config, &cli)?;
            println!("wrote {}", simulate(&config)?.display());
        }
        Command::Compare { dir_a, dir_b } => {
            let out = cli.out.clone().unwrap_or_else(|| dir_b.join("comparison"));
            let report = compare_runs(dir_a, dir_b, &out)?;
            println!("wrote {}", out.join("report.txt").display());
            println!(
                "final objectives {:e} / {:e}, max |b - a| {:e}",
                report.final_a, report.final_b, report.max_abs_difference
            );
        }
        Command::DefaultConfig => print!("{}", RunConfig::default().to_toml()?),
    }
    Ok(())
}

fn main() {
    if let Err(e) = main_inner(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
