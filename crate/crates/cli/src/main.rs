//! `lgdkit`: reproducible LGD modeling runs driven by a flat config file.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lgdkit::{Error, ErrorClass, Result};

use crate::config::RunConfig;
use crate::report::{Meta, Reporter};

#[derive(Parser)]
#[command(name = "lgdkit", version, about = "Censored LGD modeling toolkit")]
struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for report files.
    #[arg(long, global = true, default_value = "lgdkit-out")]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Load the macro series and summarize spans and gaps.
    Ingest,
    /// Correlation grid over pairs, leads, windows and buckets.
    Screen,
    /// Augmented Dickey-Fuller tests.
    Adf,
    /// Fit Tobit candidates, rank by BIC, quarterly and downturn fit.
    Fit,
    /// Coefficient stability under cross-validation.
    Cv,
    /// Fit a MARS model.
    Mars,
    /// Predict from a fitted Tobit or MARS model.
    Predict,
    /// Draw a synthetic loan portfolio.
    Simulate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Screen => "screen",
            Command::Adf => "adf",
            Command::Fit => "fit",
            Command::Cv => "cv",
            Command::Mars => "mars",
            Command::Predict => "predict",
            Command::Simulate => "simulate",
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let path = cli
        .config
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.set("seed", seed.to_string());
    }
    let meta = Meta::new(cli.command.name(), cfg.hash(), cfg.seed()?);
    let mut rep = Reporter::new(&cli.out, meta)?;
    match cli.command {
        Command::Ingest => commands::ingest(&cfg, &mut rep),
        Command::Screen => commands::screen(&cfg, &mut rep),
        Command::Adf => commands::adf(&cfg, &mut rep),
        Command::Fit => commands::fit(&cfg, &mut rep),
        Command::Cv => commands::cv(&cfg, &mut rep),
        Command::Mars => commands::mars(&cfg, &mut rep),
        Command::Predict => commands::predict(&cfg, &mut rep),
        Command::Simulate => commands::simulate(&cfg, &mut rep),
    }?;
    for p in rep.written() {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numerical => 4,
            })
        }
    }
}
