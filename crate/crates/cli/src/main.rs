//! `mocogan` command-line tool.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "mocogan", version, about = "Motion/content decomposed video GAN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Procedural dataset tools.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Train a network bundle from a run config.
    Train(TrainArgs),
    /// Render videos from a checkpoint as PNG frame folders.
    Generate(GenerateArgs),
    /// Evaluation metrics and the action classifier.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Write a shape-motion dataset file and a JSON summary next to it.
    Gen(DatasetGenArgs),
}

#[derive(Args)]
pub struct DatasetGenArgs {
    #[arg(long, default_value_t = 4000)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 16)]
    pub length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Flat `key = value` config file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Continue from a checkpoint; `iterations` more steps are run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Frames per video.
    #[arg(long, default_value_t = 16)]
    pub k: usize,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Action class for every video (models with d_a > 0 only).
    #[arg(long)]
    pub action: Option<usize>,
    /// Share one content code across all videos.
    #[arg(long)]
    pub fix_content: bool,
    /// Share one motion noise sequence across all videos.
    #[arg(long)]
    pub fix_motion: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Average content distance of a set of videos.
    Acd(AcdArgs),
    /// Motion control score: classifier accuracy on the videos' labels.
    Mcs(ClassifierMetricArgs),
    /// Inception score under a trained action classifier.
    Is(ClassifierMetricArgs),
    /// Train the action classifier used by `mcs`, `is` and the classifier embedder.
    TrainClassifier(TrainClassifierArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum EmbedderChoice {
    AverageColor,
    Classifier,
}

#[derive(Args)]
pub struct AcdArgs {
    /// A dataset file or a folder of PNG frame folders.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "average-color")]
    pub embedder: EmbedderChoice,
    /// Classifier checkpoint for `--embedder classifier`.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    /// Report JSON path; defaults to `acd.json` inside a folder input.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct ClassifierMetricArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub classifier: PathBuf,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainClassifierArgs {
    /// Labeled dataset file or frame folder.
    pub input: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    /// Clip length the classifier reads.
    #[arg(long = "t", default_value_t = 16)]
    pub t: usize,
    #[arg(long, default_value_t = 8)]
    pub base_channels: usize,
    #[arg(long, default_value_t = 300)]
    pub iterations: u64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 2e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<mocogan::Error>()) {
        Some(mocogan::Error::NonFinite(_)) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Dataset {
            command: DatasetCommand::Gen(args),
        } => commands::dataset_gen(&args),
        Command::Train(args) => commands::train(&args),
        Command::Generate(args) => commands::generate(&args),
        Command::Eval { command } => match command {
            EvalCommand::Acd(args) => commands::eval_acd(&args),
            EvalCommand::Mcs(args) => commands::eval_classifier_metric("mcs", &args),
            EvalCommand::Is(args) => commands::eval_classifier_metric("is", &args),
            EvalCommand::TrainClassifier(args) => commands::train_classifier(&args),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
