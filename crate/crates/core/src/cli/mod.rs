//! The `voicelike` command line: one subcommand per pipeline stage.
//!
//! Exit codes: 0 success, 1 failed gradient check, 2 configuration or usage
//! error, 3 data or I/O error, 4 training divergence.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::RunRecord;
pub use config::{EvalConfig, PathConfig, RunConfig, TargetGrid};

use crate::error::{Error, Result};
use crate::evalharness::ReportFormat;
use crate::manifest::Split;

#[derive(Debug, Parser)]
#[command(name = "voicelike", version, about = "Voice likability prediction and likability-controlled voice conversion")]
pub struct Cli {
    /// JSON run config; every field is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for parallel stages.
    #[arg(long, global = true, env = "VOICELIKE_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

impl SplitArg {
    pub fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Val => Some(Split::Val),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutArg {
    /// Output directory (defaults to `paths.out_dir` from the config).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the likability predictor and fit its calibration on the val split.
    TrainPredictor {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory of impulse-response WAVs for reverberation.
        #[arg(long)]
        ir_dir: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Predict calibrated ratings for every record of a manifest, streaming.
    Annotate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Records held in memory at once.
        #[arg(long, default_value_t = 256)]
        chunk: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Fit a unit codebook with mini-batch k-means.
    FitUnits {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Train)]
        split: SplitArg,
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Quantize and deduplicate every record into a unit file.
    Tokenize {
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Train the unit-to-mel converter on an annotated manifest.
    TrainConverter {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        /// Rating gain during training (default 1.0).
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Convert one utterance at one or more target ratings.
    Convert {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        /// Source audio; features are computed with the converter's front end.
        #[arg(long, conflicts_with = "features")]
        audio: Option<PathBuf>,
        /// Precomputed source features (LKBF).
        #[arg(long)]
        features: Option<PathBuf>,
        /// Target speaker embedding (LKBE).
        #[arg(long)]
        speaker: Option<PathBuf>,
        /// Target rating applied to all four groups; repeat for several outputs.
        #[arg(long, allow_negative_numbers = true)]
        target: Vec<f64>,
        /// Rating gain (default 2.5).
        #[arg(long, allow_negative_numbers = true)]
        scale: Option<f64>,
        /// Write Griffin-Lim WAVs instead of log-mel feature files.
        #[arg(long)]
        wav: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Run the evaluation harness. With no selection flags every report whose
    /// inputs are given is produced.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        predictor: Option<PathBuf>,
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long)]
        converter: Option<PathBuf>,
        #[arg(long)]
        codebook: Option<PathBuf>,
        #[arg(long)]
        sweep: bool,
        #[arg(long)]
        content: bool,
        #[arg(long)]
        similarity: bool,
        #[arg(long)]
        predictor_report: bool,
        #[arg(long, value_enum)]
        split: Option<SplitArg>,
        #[arg(long)]
        format: Option<ReportFormat>,
        #[arg(long, allow_negative_numbers = true)]
        scale: Option<f64>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Write a synthetic corpus with planted ratings.
    SynthCorpus {
        #[command(flatten)]
        out: OutArg,
    },
    /// Finite-difference check of every layer and both full models.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    commands::dispatch(cfg, cli.command)
}
