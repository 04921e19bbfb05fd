//! `contact-sense`: synthesize a contact-sound corpus, train and evaluate the
//! material classifier, classify clips, and stream log-mel frames.
//!
//! Exit codes: 0 success, 1 usage or data error, 2 internal error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use contact_sense::stream::DropPolicy;
use serde::Deserialize;

use crate::config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "contact-sense", version, about = "Contact-sound classification and streaming log-mel features")]
struct Cli {
    /// Seed for every random choice (corpus jitter, split, init, shuffling).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config file; flags override its values.
    #[arg(long, global = true, env = "CONTACT_SENSE_CONFIG")]
    config: Option<PathBuf>,
    /// Per-epoch and per-file progress on stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// 1 s windows, 64 bands, no emphasis.
    Classify,
    /// 0.2 s frames every 0.04 s, 32 bands, impact emphasis.
    Stream,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Val,
    Train,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DropArg {
    DropOldest,
    Block,
}

impl From<DropArg> for DropPolicy {
    fn from(d: DropArg) -> Self {
        match d {
            DropArg::DropOldest => DropPolicy::DropOldest,
            DropArg::Block => DropPolicy::Block,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus.
    Synth(SynthArgs),
    /// Dump a corpus's log-mel windows as MELF records.
    Featurize(FeaturizeArgs),
    /// Train the classifier on a corpus.
    Train(TrainArgs),
    /// Window-level accuracy and confusion matrix of a checkpoint.
    Eval(EvalArgs),
    /// Classify each 1 s window of a WAV file.
    Classify(ClassifyArgs),
    /// Featurize (and optionally classify) a PCM stream as JSON lines.
    Stream(StreamArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Corpus spec (TOML); the built-in nine-material spec if omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub features: Option<FeatureMode>,
    #[arg(long)]
    pub n_mels: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training history JSON; defaults to `<out>.history.json`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Fraction of each class used for training.
    #[arg(long)]
    pub split_ratio: Option<f64>,
    #[arg(long)]
    pub n_mels: Option<usize>,
    #[arg(long, value_enum)]
    pub features: Option<FeatureMode>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Which part of the training split to score.
    #[arg(long, value_enum, default_value = "val")]
    pub split: SplitArg,
    /// Also write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Blank-rejection threshold.
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// Classify every frame with this checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Input file, or `-` for stdin.
    #[arg(long, default_value = "-")]
    pub input: String,
    /// Treat the input as headerless int16 at this rate instead of WAV.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub sample_rate: Option<u32>,
    #[arg(long)]
    pub queue_capacity: Option<usize>,
    #[arg(long, value_enum)]
    pub drop_policy: Option<DropArg>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub n_mels: Option<usize>,
    /// Disable the high-frequency emphasis.
    #[arg(long)]
    pub no_emphasis: bool,
    /// Emit each frame's full mel matrix too.
    #[arg(long)]
    pub full_matrix: bool,
}

pub struct Globals {
    pub seed: Option<u64>,
    pub verbose: bool,
    pub file: FileConfig,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let g = Globals { seed: cli.seed.or(file.seed), verbose: cli.verbose, file };
    match cli.command {
        Command::Synth(a) => commands::synth(&g, a),
        Command::Featurize(a) => commands::featurize(&g, a),
        Command::Train(a) => commands::train(&g, a),
        Command::Eval(a) => commands::eval(&g, a),
        Command::Classify(a) => commands::classify(&g, a),
        Command::Stream(a) => commands::stream(&g, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(_) => ExitCode::from(2),
    }
}
