use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use css_core::mixgen::UtteranceStyle;
use css_core::StitchMode;

mod commands;
mod config;
mod dataset;
mod echo;
mod errors;
mod plot;

use errors::{ConfigError, EXIT_USAGE};

/// Worker threads for conversation-level parallelism.
pub const WORKERS_ENV: &str = "CSS_WORKERS";

/// Streaming continuous speech separation toolkit.
#[derive(Debug, Parser)]
#[command(name = "css", version, about)]
struct Cli {
    /// JSON object supplying defaults for any flag; flags on the command
    /// line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesise a sparse-overlap conversation dataset.
    Generate(GenerateArgs),
    /// Run the streaming pipeline over a dataset or WAV files.
    Separate(SeparateArgs),
    /// Score estimates against the clean sources of a dataset.
    Evaluate(EvaluateArgs),
    /// Separate and score a grid of windows, n_seg values and stitch modes.
    Sweep(SweepArgs),
    #[command(hide = true)]
    EchoSeparator(EchoArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Style {
    Phrased,
    Continuous,
}

impl From<Style> for UtteranceStyle {
    fn from(s: Style) -> Self {
        match s {
            Style::Phrased => UtteranceStyle::Phrased,
            Style::Continuous => UtteranceStyle::Continuous,
        }
    }
}

fn parse_mode(s: &str) -> Result<StitchMode, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Target overlap ratios in percent.
    #[arg(long, value_delimiter = ',', default_value = "0,10,20,40,60,80,100")]
    overlaps: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    per_overlap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = css_core::DEFAULT_SAMPLE_RATE)]
    sample_rate: u32,
    #[arg(long, value_enum, default_value_t = Style::Phrased)]
    style: Style,
}

#[derive(Debug, Args)]
pub struct SeparateArgs {
    /// Dataset index (`index.jsonl`) to process.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    index: Option<PathBuf>,
    /// Mono WAV files to process instead of a dataset.
    #[arg(long, value_delimiter = ',')]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Window length in seconds.
    #[arg(long)]
    window: f64,
    /// Hop length in seconds.
    #[arg(long)]
    hop: f64,
    /// `offline`, or the number of covering frames to wait for.
    #[arg(long, default_value = "offline")]
    nseg: String,
    #[arg(long, value_parser = parse_mode, default_value = "cross_correlation")]
    stitch: StitchMode,
    /// identity, oracle_source, ideal_ratio_mask, shuffle[:seed]:<kind> or
    /// external:<command line>.
    #[arg(long, default_value = "identity")]
    separator: String,
    #[arg(long, default_value_t = 2)]
    channels: usize,
    /// Input chunk in seconds for online runs; defaults to the hop.
    #[arg(long)]
    chunk: Option<f64>,
    #[arg(long)]
    sample_rate: Option<u32>,
    /// Seed for `shuffle:<kind>` separators without their own seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seconds to wait for an external separator's reply.
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    index: PathBuf,
    /// Directory written by `separate`.
    #[arg(long)]
    estimates: PathBuf,
    /// Report directory; defaults to the estimates directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Recorded in the report metadata.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Window lengths in seconds.
    #[arg(long, value_delimiter = ',', default_value = "3,5,10")]
    windows: Vec<f64>,
    /// Hop in seconds, shared by all windows.
    #[arg(long, conflicts_with = "hop_fraction")]
    hop: Option<f64>,
    /// Hop as a fraction of each window, e.g. 0.5.
    #[arg(long)]
    hop_fraction: Option<f64>,
    /// `all` (1..=W/H), `offline`, or a comma list.
    #[arg(long, default_value = "all")]
    nseg: String,
    #[arg(long, value_delimiter = ',', value_parser = parse_mode, default_value = "cross_correlation")]
    modes: Vec<StitchMode>,
    #[arg(long, default_value = "ideal_ratio_mask")]
    separator: String,
    #[arg(long, default_value_t = 2)]
    channels: usize,
    /// Use at most this many conversations per overlap ratio.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON cost model coefficients; defaults to the built-in calibration.
    #[arg(long)]
    cost_model: Option<PathBuf>,
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
}

#[derive(Debug, Args)]
pub struct EchoArgs {
    /// Echo the frame on every channel.
    #[arg(long)]
    broadcast: bool,
    /// Reply with the wrong frame index.
    #[arg(long)]
    wrong_index: bool,
    /// Exit with an error unless the handshake window matches.
    #[arg(long)]
    expect_window: Option<usize>,
}

fn init_workers() -> Result<()> {
    let Ok(value) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let workers: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError(format!("{WORKERS_ENV}={value} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .context("configuring the worker pool")?;
    Ok(())
}

fn parse_args() -> Result<Cli> {
    let args: Vec<OsString> = std::env::args_os().collect();
    let args = match config::config_path(&args) {
        Some(path) => config::merge(args.clone(), &config::load(path.as_ref())?)?,
        None => args,
    };
    match Cli::try_parse_from(args) {
        Ok(cli) => Ok(cli),
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            std::process::exit(i32::from(EXIT_USAGE))
        }
        Err(e) => e.exit(),
    }
}

fn run() -> Result<()> {
    let cli = parse_args()?;
    match &cli.command {
        Command::EchoSeparator(args) => echo::run(args),
        Command::Generate(args) => init_workers().and_then(|()| commands::generate(args)),
        Command::Separate(args) => init_workers().and_then(|()| commands::separate(args)),
        Command::Evaluate(args) => init_workers().and_then(|()| commands::evaluate(args)),
        Command::Sweep(args) => init_workers().and_then(|()| commands::sweep(args)),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(errors::exit_code(&err))
        }
    }
}
