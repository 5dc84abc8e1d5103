use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Multi-answer reading comprehension toolkit.
#[derive(Debug, Parser)]
#[command(name = "multiqa", version)]
pub struct Cli {
    /// More log output on standard error (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count, display_order = 100)]
    pub verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose", display_order = 101)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn verbosity(&self) -> log::LevelFilter {
        match (self.quiet, self.verbose) {
            (true, _) => log::LevelFilter::Error,
            (_, 0) => log::LevelFilter::Warn,
            (_, 1) => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a native dataset file to unified JSONL.
    Ingest(IngestArgs),
    /// Score predictions with exact-match and partial-match metrics.
    Evaluate(EvaluateArgs),
    /// List clue words detected in each question.
    Classify(ClassifyArgs),
    /// Run a decoding paradigm against a model endpoint.
    Decode(DecodeArgs),
    /// Vote over prediction files from several models.
    Ensemble(EnsembleArgs),
    /// Print corpus distribution, statistics or breakdown tables.
    Report(ReportArgs),
    /// Start the annotation HTTP service.
    AnnotateServe(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InputFormat {
    Drop,
    Quoref,
    Multispanqa,
    Unified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LcsModeArg {
    Token,
    Char,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TextOrJson {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Layout of the input file.
    #[arg(long, value_enum)]
    pub format: InputFormat,
    /// Dataset file to read.
    #[arg(long)]
    pub input: PathBuf,
    /// Taxonomy annotations (JSONL) to attach to the loaded instances.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Write unified JSONL here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the loader report (JSON) here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Gold corpus (unified JSONL).
    #[arg(long)]
    pub gold: PathBuf,
    /// Predictions (JSONL of {instance_id, spans}).
    #[arg(long)]
    pub pred: PathBuf,
    /// Taxonomy annotations; adds a per-label breakdown.
    #[arg(long, value_name = "ANNOTATIONS")]
    pub by_type: Option<PathBuf>,
    /// Unit for partial-match overlap.
    #[arg(long, value_enum, default_value = "token")]
    pub lcs_mode: LcsModeArg,
    /// Output format.
    #[arg(long, value_enum, default_value = "text")]
    pub format: TextOrJson,
    /// Write here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Corpus (unified JSONL).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Clue lexicon (`surface<TAB>type` per line); built-in list if omitted.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Also treat "and" as an alternative clue.
    #[arg(long)]
    pub and_clue: bool,
    /// Write here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Paradigm {
    Tagging,
    Numpred,
    Iterative,
    Generation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenInputArg {
    Plain,
    Pipeline,
    VanillaOneshot,
    NumpredOneshot,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Decoding strategy.
    #[arg(long, value_enum)]
    pub paradigm: Paradigm,
    /// http(s)://host[:port], cmd:<shell command>, mock:oracle, mock:degenerate or mock:scripted=<file>.
    #[arg(long)]
    pub model_endpoint: String,
    /// Corpus (unified JSONL).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Tagging probability threshold (tagging only) [default: 0.5].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Maximum model calls per instance (iterative only) [default: 8].
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// How the generation request is phrased (generation only) [default: plain].
    #[arg(long, value_enum)]
    pub gen_input: Option<GenInputArg>,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
    /// Worker threads [default: available parallelism].
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Write an empty prediction for instances whose model calls fail instead of stopping.
    #[arg(long)]
    pub keep_going: bool,
    /// Write here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Prediction file from one model (repeat for each model, at least two).
    #[arg(long = "pred", required = true)]
    pub preds: Vec<PathBuf>,
    /// Write here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportWhat {
    Types,
    Clues,
    Counts,
    Stats,
    Breakdown,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Which table to print.
    #[arg(long, value_enum)]
    pub what: ReportWhat,
    /// Corpus (unified JSONL).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Taxonomy annotations to attach before reporting.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Predictions (breakdown only).
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Unit for partial-match overlap (breakdown only).
    #[arg(long, value_enum, default_value = "token")]
    pub lcs_mode: LcsModeArg,
    /// Output format.
    #[arg(long, value_enum, default_value = "text")]
    pub format: TableFormat,
    /// Write here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Corpus to annotate (unified JSONL).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Append-only event log; replayed on start.
    #[arg(long)]
    pub log: PathBuf,
    /// Annotator id (repeatable).
    #[arg(long = "annotator", required = true)]
    pub annotators: Vec<String>,
    /// Annotator id allowed to adjudicate (repeatable).
    #[arg(long = "adjudicator")]
    pub adjudicators: Vec<String>,
    /// Seed for task assignment.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Clue lexicon used to pre-route questions; built-in list if omitted.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Directory with the workbench bundle.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}
