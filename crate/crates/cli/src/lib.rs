//! `riskwatch` command line: offline labeling, training and evaluation, the two
//! services, the simulated sensor and one-shot session assessment.

pub mod commands;
pub mod config;
pub mod render;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use riskwatch_core::Aggregation;

pub use config::RunConfig;

/// A problem with the user's input or configuration (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "riskwatch", version, about = "Physiological and environmental risk assessment")]
pub struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, env = "RISKWATCH_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean, standardize, window and label a CSV into a dataset file.
    Label(LabelArgs),
    /// Train the classifier on a subject-level split.
    Train(TrainArgs),
    /// Confusion matrix, per-class metrics and ROC AUC for a trained model.
    Evaluate(EvaluateArgs),
    /// Subject-grouped k-fold cross-validation.
    Cv(CvArgs),
    /// Compare a leaky random-window split against a subject split.
    Leakage(LeakageArgs),
    /// Serve the model over HTTP.
    ServeInference(ServeInferenceArgs),
    /// Buffer telemetry into sessions and forward them for inference.
    ServeGateway(ServeGatewayArgs),
    /// Stream a simulated sensor to the gateway (or write a corpus).
    Simulate(SimulateArgs),
    /// Generate a multi-subject synthetic corpus CSV.
    Corpus(CorpusArgs),
    /// Assess one recorded session offline.
    Assess(AssessArgs),
    /// Show the gateway's current session.
    Status(StatusArgs),
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Input CSV (defaults to the configured dataset path).
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "dataset.bin")]
    pub out: PathBuf,
    /// Also write one summary row per window.
    #[arg(long)]
    pub summary_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DatasetArg {
    /// Labeled dataset file, or a raw CSV to label on the fly.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainingOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Visit one of N interleaved slices of the training windows per epoch.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DatasetArg,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: TrainingOverrides,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DatasetArg,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Score every window instead of only the held-out subjects of the seeded split.
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DatasetArg,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[command(flatten)]
    pub overrides: TrainingOverrides,
}

#[derive(Debug, Args)]
pub struct LeakageArgs {
    #[command(flatten)]
    pub data: DatasetArg,
    /// Split and training seeds, one experiment each.
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3])]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub overrides: TrainingOverrides,
}

#[derive(Debug, Args)]
pub struct ServeInferenceArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "0.0.0.0")]
    pub host: String,
}

#[derive(Debug, Args)]
pub struct ServeGatewayArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "0.0.0.0")]
    pub host: String,
    #[arg(long)]
    pub inference_url: Option<String>,
    #[arg(long)]
    pub threshold: Option<usize>,
    /// Drop telemetry that arrives after the session threshold.
    #[arg(long)]
    pub single_session: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub gateway_url: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub rate_hz: f64,
    /// Built-in scenario name (two-phase, calm, stress) or a scenario JSON file.
    #[arg(long, default_value = "two-phase")]
    pub scenario: String,
    #[arg(long)]
    pub duration_s: Option<u64>,
    #[arg(long, default_value = "live")]
    pub subject_id: String,
    /// Write a corpus CSV instead of streaming.
    #[arg(long)]
    pub corpus_out: Option<PathBuf>,
    #[arg(long, default_value_t = 14)]
    pub subjects: usize,
    #[arg(long, default_value_t = 43)]
    pub minutes: u64,
    /// Scenario-library preset (`default`, `distinct-rooms`); replaces `corpus` from the config.
    #[arg(long)]
    pub library: Option<String>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 14)]
    pub subjects: usize,
    #[arg(long, default_value_t = 43)]
    pub minutes: u64,
    /// Scenario-library preset (`default`, `distinct-rooms`); replaces `corpus` from the config.
    #[arg(long)]
    pub library: Option<String>,
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    /// Session CSV in the pipeline column layout.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "majority")]
    pub aggregation: AggregationArg,
    /// Which subject to assess when the file holds several.
    #[arg(long)]
    pub subject: Option<String>,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
pub enum AggregationArg {
    Majority,
    MaxRisk,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::Majority => Aggregation::Majority,
            AggregationArg::MaxRisk => Aggregation::MaxRisk,
        }
    }
}

#[derive(Debug, Args)]
pub struct StatusArgs {
    #[arg(long)]
    pub gateway_url: Option<String>,
    /// Poll until interrupted, printing every change.
    #[arg(long)]
    pub watch: bool,
    /// With --watch, stop once the session is complete.
    #[arg(long)]
    pub until_complete: bool,
    #[arg(long, default_value_t = 1000)]
    pub interval_ms: u64,
}

/// Parses `args`, runs the command and maps the outcome to an exit code:
/// 0 success, 1 invalid input or configuration, 2 runtime failure.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    init_logging(cli.verbose);
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_millis()
        .try_init();
}

/// 1 for bad input or configuration, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    use riskwatch_core::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            if matches!(
                e,
                E::Validation(_)
                    | E::Config(_)
                    | E::Csv(_)
                    | E::MissingColumn(_)
                    | E::NoUsableRows(_)
                    | E::EmptySeries(_)
                    | E::SeriesTooShort { .. }
                    | E::TooFew { .. }
            ) {
                return 1;
            }
        }
        if let Some(riskwatch_services::ServiceError::Config(_)) = cause.downcast_ref() {
            return 1;
        }
    }
    2
}
