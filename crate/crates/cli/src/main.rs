//! `hes-regkit`: signal characterization, dispatch benchmarks and capacity
//! bidding experiments for hybrid energy systems.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{Mode, Overrides, RunConfig, Side, SCHEMA};

#[derive(Parser)]
#[command(name = "hes-regkit", version, about)]
struct Cli {
    /// Print the annotated configuration schema and exit.
    #[arg(long)]
    print_schema: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Energy-neutrality statistics of the signal archive.
    Characterize(Opts),
    /// Dispatch one window with the real-time rule and/or the offline optimum.
    Dispatch(Opts),
    /// Solve the chance-constrained capacity bid.
    Bid(Opts),
    /// Re-solve the bid while varying the generator or load rating.
    AsymSweep(Opts),
    /// SoC trajectories of one window while varying an asset rating.
    SocDrift(Opts),
    /// Write a synthetic signal archive.
    Synth(Opts),
}

#[derive(Args)]
struct Opts {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    window: Option<usize>,
    /// Capacity bid (MW).
    #[arg(long)]
    capacity: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    xp_min: Option<f64>,
    #[arg(long, value_enum)]
    vary: Option<Side>,
    /// Comma-separated ratings (MW).
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    values: Option<Vec<f64>>,
    /// Trailing fraction of windows held out of the bid.
    #[arg(long)]
    holdout: Option<f64>,
    /// Leading samples skipped before the first window.
    #[arg(long)]
    offset: Option<usize>,
    /// Signal archive; replaces the configured source.
    #[arg(long)]
    archive: Option<PathBuf>,
}

impl Opts {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            window: self.window,
            capacity: self.capacity,
            mode: self.mode,
            out: self.out.clone(),
            seed: self.seed,
            gamma: self.gamma,
            xp_min: self.xp_min,
            vary: self.vary,
            values: self.values.clone(),
            holdout: self.holdout,
            offset: self.offset,
            archive: self.archive.clone(),
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Characterize(o) => commands::characterize(&o.resolve()?),
        Command::Dispatch(o) => commands::dispatch(&o.resolve()?),
        Command::Bid(o) => commands::bid(&o.resolve()?),
        Command::AsymSweep(o) => commands::asym_sweep(&o.resolve()?),
        Command::SocDrift(o) => commands::soc_drift(&o.resolve()?),
        Command::Synth(o) => commands::synth(&o.resolve()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.print_schema {
        print!("{SCHEMA}");
        return ExitCode::SUCCESS;
    }
    let Some(cmd) = cli.command else {
        eprintln!("error: no command given; see `hes-regkit --help`");
        return ExitCode::from(2);
    };
    match run(cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
