//! Batch front end: data preparation, training, sampling, evaluation and
//! the disentanglement probe.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use stgen::autodiff::AdError;
use stgen::data::SourceFormat;
use stgen::model::Variant;
use stgen::{Error, Point};

mod evaluate;
mod generate;
mod io;
mod prepare;
mod probe;
mod synth;
mod train;
pub mod weights;

#[derive(Parser, Debug)]
#[command(name = "stgen", version, about = "Trajectory generation with validity constraints")]
pub struct Cli {
    /// Upper bound on worker threads. Every command currently runs on one.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Load raw traces, clean them and write train/test window files.
    Prepare(PrepareArgs),
    /// Train a model variant on a prepared corpus.
    Train(TrainArgs),
    /// Sample trajectories from trained weights.
    Generate(GenerateArgs),
    /// Compare generated trajectories with real ones.
    Evaluate(EvaluateArgs),
    /// Cross global and step latents on a grid.
    ProbeDisentangle(ProbeArgs),
    /// Write a synthetic corpus with known archetypes.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    #[arg(long, value_parser = parse_format)]
    pub format: Format,
    #[arg(long)]
    pub input: PathBuf,
    /// Projection origin `lon,lat`; defaults to the mean of all points.
    #[arg(long, value_parser = io::parse_point, allow_hyphen_values = true)]
    pub origin: Option<Point>,
    /// Drop points outside `lon_min,lat_min,lon_max,lat_max`.
    #[arg(long, value_parser = io::parse_bbox, allow_hyphen_values = true)]
    pub bbox: Option<[f64; 4]>,
    /// Window length.
    #[arg(long = "T")]
    pub t_len: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub train_ratio: Option<f64>,
    /// JSON corpus config; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Source(SourceFormat),
    /// Corpus files written by `stgen synth`, already in kilometres.
    Synth,
}

fn parse_format(s: &str) -> Result<Format, String> {
    if s == "synth" {
        return Ok(Format::Synth);
    }
    [SourceFormat::PortoCsv, SourceFormat::TdriveLog, SourceFormat::GowallaCheckins]
        .into_iter()
        .find(|f| f.name() == s)
        .map(Format::Source)
        .ok_or_else(|| format!("unknown format `{s}` (porto-csv, tdrive-log, gowalla-checkins, synth)"))
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training corpus (JSON lines).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = |s: &str| s.parse::<Variant>().map_err(|e| e.to_string()))]
    pub variant: Option<Variant>,
    /// Base hyper-parameters: taxi, checkin or toy.
    #[arg(long, default_value = "taxi")]
    pub preset: String,
    /// JSON model config overlaid on the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Constraint document; enables the validity penalty.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for weights, epoch log and resolved config.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Trajectory length; defaults to the trained length.
    #[arg(long = "T")]
    pub t_len: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Start point `x,y` for the LSTM baseline.
    #[arg(long, value_parser = io::parse_point, allow_hyphen_values = true, conflicts_with = "start_from")]
    pub start: Option<Point>,
    /// Corpus whose first points seed the LSTM baseline, cycled.
    #[arg(long)]
    pub start_from: Option<PathBuf>,
    /// One global latent shared by all `n` samples.
    #[arg(long, conflicts_with = "reconstruct")]
    pub shared_f: bool,
    /// Reconstruct this corpus through the posterior means instead of sampling.
    #[arg(long)]
    pub reconstruct: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub real: PathBuf,
    #[arg(long)]
    pub generated: PathBuf,
    /// Cells per side of the grid-count feature.
    #[arg(long, default_value_t = 16)]
    pub grid: usize,
    /// Constraint documents to score; may repeat.
    #[arg(long)]
    pub constraints: Vec<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Sampling interval in seconds.
    #[arg(long, default_value_t = stgen::trajectory::DEFAULT_INTERVAL_S)]
    pub interval: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ProbeArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value_t = 9)]
    pub rows: usize,
    #[arg(long, default_value_t = 9)]
    pub cols: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "T")]
    pub t_len: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long = "T")]
    pub t_len: Option<usize>,
    #[arg(long)]
    pub archetypes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON generator config; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Process exit status for a failed command: 2 configuration, 3 data,
/// 4 numeric divergence, 1 anything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Divergence { .. } | Error::Autodiff(AdError::NonFinite { .. }) => 4,
                Error::Config(_)
                | Error::Variant { .. }
                | Error::Width { .. }
                | Error::MissingParam(_)
                | Error::DuplicateParam(_) => 2,
                Error::Data(_) | Error::Input(_) | Error::Io(_) | Error::Json(_) => 3,
                Error::Autodiff(_) => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.workers == 0 {
        return Err(Error::Config("--workers must be at least 1".into()).into());
    }
    if cli.workers > 1 {
        log::info!("--workers {} requested; running single-threaded", cli.workers);
    }
    match cli.command {
        Command::Prepare(a) => prepare::run(&a),
        Command::Train(a) => train::run(&a),
        Command::Generate(a) => generate::run(&a),
        Command::Evaluate(a) => evaluate::run(&a),
        Command::ProbeDisentangle(a) => probe::run(&a),
        Command::Synth(a) => synth::run(&a),
    }
}
