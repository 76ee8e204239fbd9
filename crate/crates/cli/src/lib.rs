//! Subcommand front end for the sectorscope pipelines.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use sectorscope::error::{Error, Result};

use crate::config::{parse_config, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "sectorscope", version, about = "Sector-level call and text volume analysis")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Run configuration (key = value).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory; overrides `outdir` in the config.
    #[arg(long, global = true, value_name = "DIR")]
    pub outdir: Option<PathBuf>,

    /// Worker threads for parallel kernels.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    /// Generator seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Build the sector tessellation and tower-only baseline.
    Tessellate,
    /// Generate a synthetic layout, volumes, zones and ground truth.
    Synth,
    /// Resample volumes to a coarser resolution.
    Aggregate,
    /// Week-lag anomaly ratios per sector.
    Anomaly,
    /// Spatial statistics, max-sector traces and scaling fits.
    Stats,
    /// Multitaper spectra and call/text coherency.
    Spectrum,
    /// Bin-by-bin spatial correlation and disruption scores.
    Corr,
    /// Interpolated volume density raster.
    Grid,
    /// Day by latitude-ordered sector volume map.
    Tsmap,
    /// Earthquake timing, distance profiles and response classes.
    Quake,
    /// Storm zone series and call/text divergence.
    Storm,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::config("--config is required"))?;
    let mut cfg = parse_config(path)?;
    if let Some(o) = &cli.outdir {
        cfg.outdir = o.clone();
    }
    if cli.threads == Some(0) {
        return Err(Error::config("--threads must be at least 1"));
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    cfg.prepare_outdir()?;
    let threads = cli.threads.or(cfg.threads);
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| Error::internal(format!("thread pool: {e}")))?
    };
    pool.install(|| match cli.command {
        Command::Tessellate => commands::tessellate(&cfg),
        Command::Synth => commands::synth(&cfg, cli.seed),
        Command::Aggregate => commands::aggregate(&cfg),
        Command::Anomaly => commands::anomaly_cmd(&cfg),
        Command::Stats => commands::stats_cmd(&cfg),
        Command::Spectrum => commands::spectrum(&cfg),
        Command::Corr => commands::corr(&cfg),
        Command::Grid => commands::grid(&cfg),
        Command::Tsmap => commands::tsmap(&cfg),
        Command::Quake => commands::quake(&cfg),
        Command::Storm => commands::storm(&cfg),
    })
}

/// Parse `argv`, run the subcommand and return the process exit code:
/// 0 on success, 1 for usage or input errors, 2 for internal errors.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input() {
                1
            } else {
                2
            }
        }
    }
}
