mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Multichannel speech enhancement workbench.
#[derive(Debug, Parser)]
#[command(name = "jnf", version)]
pub struct Cli {
    /// TOML run configuration; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed of every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a simulated dataset with manifests.
    Simulate(SimulateArgs),
    /// Train a mask estimator on a simulated dataset.
    Train(TrainArgs),
    /// Run a filter pipeline on one multichannel WAV file.
    Enhance(EnhanceArgs),
    /// Score pipelines on a dataset split.
    Evaluate(EvaluateArgs),
    /// Write the STFT magnitude of one channel as CSV (bins × frames).
    ExportSpectrogram(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub val: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    /// Directory of mono 16 kHz WAV utterances.
    #[arg(long, conflicts_with = "synthetic")]
    pub corpus: Option<PathBuf>,
    /// Use synthetic speech stand-ins instead of a corpus.
    #[arg(long)]
    pub synthetic: bool,
    /// Length of synthetic utterances in seconds.
    #[arg(long)]
    pub seconds: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory written by `simulate`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Run directory for logs, checkpoints and the config snapshot.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// t-jnf, f-jnf, ft-jnf, t-nsf, f-nsf, ft-nsf or pf.
    #[arg(long)]
    pub variant: Option<String>,
    /// LSTM sizes as `first,second`.
    #[arg(long)]
    pub hidden: Option<String>,
    /// Pipeline producing the network input, e.g. `mvdr-oracle`.
    #[arg(long)]
    pub input: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub crop_seconds: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    /// Stages joined by `+`: identity, mvdr-oracle or checkpoint paths.
    #[arg(long)]
    pub filter: String,
    /// Noise-only image at the microphones, required by `mvdr-oracle`.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    pub input: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Comma-separated pipelines, each with stages joined by `+`.
    #[arg(long)]
    pub pipelines: Option<String>,
    /// train, val or test.
    #[arg(long)]
    pub split: Option<String>,
    /// Report directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Program scoring `ref.wav est.wav`, e.g. a POLQA wrapper.
    #[arg(long)]
    pub external_metric: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub channel: usize,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let loaded = config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate(args) => commands::simulate(&loaded, cli.seed, args),
        Command::Train(args) => commands::train(&loaded, cli.seed, args),
        Command::Enhance(args) => commands::enhance(args),
        Command::Evaluate(args) => commands::evaluate(&loaded, cli.seed, args),
        Command::ExportSpectrogram(args) => commands::export_spectrogram(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code())
        }
    }
}
