mod commands;
mod config;

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fogalloc_core::ThresholdTable;

use crate::config::RunConfig;

/// Online VMI allocation and pricing for fog nodes.
#[derive(Parser, Debug)]
#[command(name = "fogalloc", version, about)]
struct Cli {
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the threshold curves; writes thresholds.csv and revenue.csv.
    Solve(RunArgs),
    /// Run the strategy comparison; writes sweep.csv and evolution.csv.
    Simulate(RunArgs),
    /// Accept or reject one request against a solved table.
    Decide(DecideArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct DecideArgs {
    /// thresholds.csv written by `solve`.
    #[arg(long)]
    thresholds: PathBuf,
    /// Comma-separated response rates of the available VMIs (1/ms).
    #[arg(long)]
    rates: String,
    /// Characteristic of the request.
    #[arg(long)]
    x: f64,
    /// Arrival time in hours.
    #[arg(long)]
    t: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
}

fn load(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("starting the worker pool")?;
    match cli.command {
        Command::Solve(args) => {
            let cfg = load(&args)?;
            let files = commands::solve(&cfg)?;
            commands::write_outputs(&cfg.output.dir, "solve", &cfg, &files)?;
        }
        Command::Simulate(args) => {
            let cfg = load(&args)?;
            let files = commands::simulate(&cfg)?;
            commands::write_outputs(&cfg.output.dir, "simulate", &cfg, &files)?;
        }
        Command::Decide(args) => {
            let text = fs::read_to_string(&args.thresholds)
                .with_context(|| format!("reading {}", args.thresholds.display()))?;
            let table = ThresholdTable::from_csv(&text, args.eta)?;
            let rates = commands::parse_rates(&args.rates)?;
            println!("{}", commands::decide(&table, &rates, args.x, args.t)?);
        }
    }
    Ok(())
}
