//! `motionmask`: train, run and evaluate the deep motion masking pipeline.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use motion_mask::Error;

#[derive(Debug, Parser)]
#[command(name = "motionmask", version, about = "Anonymize VR head and hand telemetry with deep motion masking")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override any configuration value, e.g. `--set pipeline.train.batch_size=16`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with a manifest.
    Synth(SynthArgs),
    /// Scan a directory of recordings into a manifest with train/validation/test splits.
    Ingest(IngestArgs),
    /// Train one stage and store it in a bundle.
    Train {
        #[command(subcommand)]
        stage: Stage,
    },
    /// Anonymize recordings post hoc.
    Anonymize(AnonymizeArgs),
    /// Anonymize frames from stdin to stdout, one JSON line each.
    Stream(StreamArgs),
    /// Run the cross-session re-identification scenarios.
    Evaluate(EvaluateArgs),
    /// Measure per-frame streaming latency.
    Bench(BenchArgs),
    /// Render an evaluation JSON file as markdown.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub users: usize,
    #[arg(long, default_value_t = 10)]
    pub activities: usize,
    /// Recordings per user.
    #[arg(long, default_value_t = 20)]
    pub recordings: usize,
    /// Recording length in seconds.
    #[arg(long, default_value_t = 36.0)]
    pub duration: f64,
    /// Source frame rate.
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
    /// Seed of the shared activity bank.
    #[arg(long)]
    pub world_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of `*.jsonl` recordings.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Manifest to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Validation recordings per user.
    #[arg(long, default_value_t = 2)]
    pub validation: usize,
    /// Test recordings per user.
    #[arg(long, default_value_t = 2)]
    pub test: usize,
    /// Fail if any file is rejected.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    Identifier,
    ActionSim,
    UserSim,
    Anonymizer,
    Normalizer,
}

#[derive(Debug, Subcommand)]
pub enum Stage {
    /// Softmax user identifier (LSTM funnel).
    Identifier(TrainArgs),
    /// Same-versus-different activity scorer.
    ActionSim(TrainArgs),
    /// Same-versus-different user scorer.
    UserSim(TrainArgs),
    /// Anonymizer: reconstruction pretraining, then adversarial training. Needs both scorers.
    Anonymizer(TrainArgs),
    /// Population shift and normalizer. Needs the anonymizer.
    Normalizer(TrainArgs),
}

impl Stage {
    pub fn split(&self) -> (StageKind, &TrainArgs) {
        match self {
            Stage::Identifier(a) => (StageKind::Identifier, a),
            Stage::ActionSim(a) => (StageKind::ActionSim, a),
            Stage::UserSim(a) => (StageKind::UserSim, a),
            Stage::Anonymizer(a) => (StageKind::Anonymizer, a),
            Stage::Normalizer(a) => (StageKind::Normalizer, a),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Manifest with train/validation/test splits (from `ingest`).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Bundle to update; created if missing.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Where to write the training report JSON (default: next to the bundle).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Maximum epochs for this stage.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Early-stopping patience in epochs.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Plateau epochs before the learning rate decays.
    #[arg(long)]
    pub lr_patience: Option<usize>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub lr_floor: Option<f64>,
    /// Gradient norm clip; 0 disables clipping.
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Weight of the action-preservation terms.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Weight of the user-similarity term.
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    /// Training pairs (similarity scorers) or samples (anonymizer).
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Recurrent width of encoders (identifier and scorers).
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Recurrent width of the normalizer.
    #[arg(long)]
    pub normalizer_state: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnonymizeArgs {
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// A recording or a directory of recordings.
    #[arg(long)]
    pub input: PathBuf,
    /// Output file, or directory when the input is a directory.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Resample arbitrary input timestamps onto the 30 fps grid (adds one frame of delay).
    #[arg(long)]
    pub resample: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IdentifierChoice {
    Lstm,
    Forest,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindChoice {
    Oblivious,
    Adaptive,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DefenseChoice {
    None,
    Masking,
    All,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Manifest of the evaluation cohort (users disjoint from the bundle's training users).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Report directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub users: Option<usize>,
    /// Recordings per session and user.
    #[arg(long)]
    pub per_session: Option<usize>,
    /// Adversary's identifier.
    #[arg(long, value_enum, default_value_t = IdentifierChoice::All)]
    pub identifier: IdentifierChoice,
    /// Adversary kind for masked scenarios.
    #[arg(long, value_enum, default_value_t = KindChoice::All)]
    pub kind: KindChoice,
    /// Whether session-2 data is unmodified, masked, or both.
    #[arg(long, value_enum, default_value_t = DefenseChoice::All)]
    pub defense: DefenseChoice,
    /// Epochs for the adversary's LSTM funnel.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Trees in the summary-statistic forest.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Recurrent width of the adversary's LSTM funnel.
    #[arg(long)]
    pub hidden: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Frames to time.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Source recording; a synthetic one is generated if omitted.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Use an untrained bundle of the default architecture instead of `--bundle`.
    #[arg(long)]
    pub default_architecture: bool,
    /// Write the latency report here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `evaluation.json` from `evaluate`.
    #[arg(long)]
    pub input: PathBuf,
    /// Markdown output; stdout if omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Training(_) => 3,
        Error::Usage(_) | Error::Config(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
