//! The `tokpress` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

use std::fmt;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::grid::ThumbnailLayout;
use crate::model::{Ordering, PoolKind, PoolMode, StrategyKind};

pub mod commands;
pub mod config_file;
pub mod frames;

pub use config_file::{parse_config, Overrides};

#[derive(Debug, Parser)]
#[command(name = "tokpress", version, about = "Fixed-budget visual token packs for video LLMs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a compression strategy on a frame directory or feature file.
    Compress(CompressArgs),
    /// Print a pack's header and token statistics.
    Inspect(InspectArgs),
    /// Token counts and compression rates for every strategy, as CSV.
    Compare(CompareArgs),
    /// Token allocation across values of one parameter, as CSV.
    Sweep(SweepArgs),
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_positive_u32(s: &str) -> Result<u32, String> {
    parse_positive(s).and_then(|v| u32::try_from(v).map_err(|e| e.to_string()))
}

/// Pipeline settings shared by `compress` and `sweep`. Unset flags fall
/// back to the config file, then to the built-in defaults.
#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// key = value file with CompressionConfig field names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Maximum frames sampled from the input (N).
    #[arg(long, value_parser = parse_positive)]
    pub frames: Option<usize>,
    /// Frames per thumbnail image (N_T), even.
    #[arg(long = "thumb-frames", value_parser = parse_positive)]
    pub thumb_frames: Option<usize>,
    /// Number of thumbnail images (k).
    #[arg(long, value_parser = parse_positive)]
    pub thumbnails: Option<usize>,
    /// Total visual token budget (M).
    #[arg(long, value_parser = parse_positive)]
    pub budget: Option<usize>,
    #[arg(long, value_parser = parse_positive_u32)]
    pub resolution: Option<u32>,
    #[arg(long, value_parser = parse_positive_u32)]
    pub patch: Option<u32>,
    /// Token dimensionality of the stub encoder.
    #[arg(long, value_parser = parse_positive)]
    pub dim: Option<usize>,
    /// Thumbnail grid as COLSxROWS; defaults to two columns.
    #[arg(long)]
    pub layout: Option<ThumbnailLayout>,
    #[arg(long, value_enum)]
    pub ordering: Option<OrderingArg>,
    #[arg(long = "pool-mode", value_enum)]
    pub pool_mode: Option<PoolModeArg>,
    #[arg(long = "pool-kind", value_enum)]
    pub pool_kind: Option<PoolKindArg>,
    #[arg(long, value_parser = parse_positive)]
    pub kernel: Option<usize>,
    /// Defaults to the kernel size.
    #[arg(long, value_parser = parse_positive)]
    pub stride: Option<usize>,
}

impl ConfigArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            n_frames: self.frames,
            n_thumb_frames: self.thumb_frames,
            n_thumbnails: self.thumbnails,
            token_budget: self.budget,
            encoder_resolution: self.resolution,
            patch_size: self.patch,
            thumb_layout: self.layout,
            ordering: self.ordering.map(Into::into),
            pool_mode: self.pool_mode.map(Into::into),
            pool_kind: self.pool_kind.map(Into::into),
            kernel: self.kernel,
            stride: self.stride,
            dim: self.dim,
            ..Overrides::default()
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Concat,
    Pool,
    Grid,
    Grids,
    Sample,
    Ts,
}

impl From<StrategyArg> for StrategyKind {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Concat => StrategyKind::Concat,
            StrategyArg::Pool => StrategyKind::Pool,
            StrategyArg::Grid => StrategyKind::Grid,
            StrategyArg::Grids => StrategyKind::Grids,
            StrategyArg::Sample => StrategyKind::Sample,
            StrategyArg::Ts => StrategyKind::ThumbnailAndSampling,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrderingArg {
    SamplingFirst,
    ThumbnailFirst,
}

impl From<OrderingArg> for Ordering {
    fn from(o: OrderingArg) -> Self {
        match o {
            OrderingArg::SamplingFirst => Ordering::SamplingFirst,
            OrderingArg::ThumbnailFirst => Ordering::ThumbnailFirst,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PoolModeArg {
    Avg,
    Max,
}

impl From<PoolModeArg> for PoolMode {
    fn from(m: PoolModeArg) -> Self {
        match m {
            PoolModeArg::Avg => PoolMode::Avg,
            PoolModeArg::Max => PoolMode::Max,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PoolKindArg {
    Seq1d,
    Spatial2d,
}

impl From<PoolKindArg> for PoolKind {
    fn from(k: PoolKindArg) -> Self {
        match k {
            PoolKindArg::Seq1d => PoolKind::Seq1d,
            PoolKindArg::Spatial2d => PoolKind::Spatial2d,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CompressArgs {
    /// Directory of numbered PNG/PPM frames, or a .tstk feature file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    #[command(flatten)]
    pub settings: ConfigArgs,
    /// Destination .tstk pack.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the header JSON next to the pack.
    #[arg(long)]
    pub manifest: bool,
    /// Worker threads for frame encoding.
    #[arg(long, env = "TOKPRESS_THREADS", value_parser = parse_positive)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long, value_parser = parse_positive, default_value_t = 16)]
    pub frames: usize,
    #[arg(long, value_parser = parse_positive, default_value_t = 2304)]
    pub budget: usize,
    /// Frames per grid image; defaults to budget / V rounded down to even.
    #[arg(long = "thumb-frames", value_parser = parse_positive)]
    pub thumb_frames: Option<usize>,
    #[arg(long, value_parser = parse_positive_u32, default_value_t = 336)]
    pub resolution: u32,
    #[arg(long, value_parser = parse_positive_u32, default_value_t = 14)]
    pub patch: u32,
    /// Token dim used for the synthetic run; counts do not depend on it.
    #[arg(long, value_parser = parse_positive, default_value_t = 1)]
    pub dim: usize,
    #[arg(long, env = "TOKPRESS_THREADS", value_parser = parse_positive)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Frames,
    ThumbFrames,
    Thumbnails,
    Budget,
}

impl SweepParam {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::Frames => "frames",
            SweepParam::ThumbFrames => "thumb-frames",
            SweepParam::Thumbnails => "thumbnails",
            SweepParam::Budget => "budget",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub param: SweepParam,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<usize>,
    #[command(flatten)]
    pub settings: ConfigArgs,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(Error::IoError(e))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(Error::IoError(io::Error::other(e)))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(e) => write!(f, "error: {}: {e}", e.name()),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Compress(a) => commands::compress(&a, out),
        Command::Inspect(a) => commands::inspect(&a, out),
        Command::Compare(a) => commands::compare(&a, out),
        Command::Sweep(a) => commands::sweep(&a, out),
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
