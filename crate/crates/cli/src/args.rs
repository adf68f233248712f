use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vte_core::corpus::SplitName;
use vte_core::train::SelectionMetric;

#[derive(Debug, Parser)]
#[command(name = "vte", version, about = "Visual-textual entailment workbench", args_override_self = true)]
pub struct Cli {
    /// Key-value file (`key = value` per line) supplying defaults for the
    /// subcommand's flags; flags on the command line take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Log more (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply corrections and attach explanations to a split, or write a
    /// synthetic desk-scale corpus.
    BuildCorpus(BuildCorpusArgs),
    /// Aggregate triple annotations and merge them into a base split.
    Aggregate(AggregateArgs),
    /// Print split statistics.
    Stats(StatsArgs),
    /// Train one model and save the selected checkpoint.
    Train(TrainArgs),
    /// Train a predict-and-explain model for several loss weights.
    SweepAlpha(SweepArgs),
    /// Score checkpoints on the original and corrected test splits.
    Evaluate(EvaluateArgs),
    /// Predict labels and generate explanations for a split.
    Generate(GenerateArgs),
    /// Draw a relevance review sheet or summarize a scored one.
    Audit(AuditArgs),
    /// Run the annotation HTTP service.
    Serve(ServeArgs),
}

pub fn parse_split(s: &str) -> Result<SplitName, String> {
    s.parse().map_err(|e: vte_core::Error| e.to_string())
}

pub fn parse_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(_) => Err(format!("{s:?} is not a positive integer")),
    }
}

fn parse_metric(s: &str) -> Result<SelectionMetric, String> {
    s.parse().map_err(|e: vte_core::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct BuildCorpusArgs {
    /// Base split file.
    #[arg(long, required_unless_present = "synthetic")]
    pub split: Option<PathBuf>,
    #[arg(long, default_value = "validation", value_parser = parse_split)]
    pub name: SplitName,
    /// Annotation records of re-annotated neutral pairs.
    #[arg(long, conflicts_with = "synthetic")]
    pub records: Option<PathBuf>,
    /// `{"pair_id": …, "explanations": […]}` lines to attach.
    #[arg(long, conflicts_with = "synthetic")]
    pub explanations: Option<PathBuf>,
    #[arg(long, required_unless_present = "synthetic")]
    pub out: Option<PathBuf>,
    /// Where to list pairs dropped as ambiguous.
    #[arg(long)]
    pub ambiguous_out: Option<PathBuf>,

    /// Write synthetic train/validation/test splits, region features and
    /// embeddings to `--out-dir` instead.
    #[arg(long, requires = "out_dir")]
    pub synthetic: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub n_train: usize,
    #[arg(long, default_value_t = 30)]
    pub n_validation: usize,
    #[arg(long, default_value_t = 30)]
    pub n_test: usize,
    #[arg(long, default_value_t = 3)]
    pub regions: usize,
    #[arg(long, default_value_t = 8, value_parser = parse_positive)]
    pub dim: usize,
    #[arg(long, default_value_t = 16, value_parser = parse_positive)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long, default_value = "validation", value_parser = parse_split)]
    pub name: SplitName,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub ambiguous_out: Option<PathBuf>,
    /// Machine-readable redistribution and worker report.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, default_value = "validation", value_parser = parse_split)]
    pub name: SplitName,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    /// Classifier only.
    Butd,
    /// Classifier plus label-conditioned explanation decoder.
    Pae,
    /// Unconditioned explanation generator (loss weight 0).
    Etp,
    /// Classifier over explanation text alone.
    ExplToLabel,
}

/// Data, dimensions and optimisation knobs shared by `train` and
/// `sweep-alpha`.
#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub validation: PathBuf,
    /// Region feature manifest.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Pretrained vectors in whitespace text format; a seeded random table
    /// over the training hypotheses is used when absent.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = vte_core::model::DEFAULT_EMBED_DIM, value_parser = parse_positive)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = vte_core::model::DEFAULT_HIDDEN, value_parser = parse_positive)]
    pub hidden: usize,
    #[arg(long, default_value_t = 512, value_parser = parse_positive)]
    pub attention_dim: usize,
    /// Update word embeddings instead of keeping them frozen.
    #[arg(long)]
    pub train_embeddings: bool,
    #[arg(long, value_parser = parse_positive)]
    pub decoder_hidden: Option<usize>,
    #[arg(long, default_value_t = 300, value_parser = parse_positive)]
    pub decoder_embed_dim: usize,
    /// Sum the explanation loss over tokens instead of averaging it, which
    /// weights long explanations more heavily against the label loss.
    #[arg(long)]
    pub sum_explanation_loss: bool,
    /// Decoder vocabulary frequency threshold.
    #[arg(long, default_value_t = vte_core::explainer::DEFAULT_MIN_COUNT)]
    pub min_count: usize,
    #[arg(long, default_value_t = vte_core::explainer::DEFAULT_MLP_WIDTH, value_parser = parse_positive)]
    pub mlp_width: usize,
    #[arg(long, default_value_t = 64, value_parser = parse_positive)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100, value_parser = parse_positive)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 3, value_parser = parse_positive)]
    pub patience: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// BALANCED_ACCURACY, ACCURACY or PERPLEXITY; defaults to perplexity for
    /// `etp` and balanced accuracy otherwise.
    #[arg(long, value_parser = parse_metric)]
    pub selection_metric: Option<SelectionMetric>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelChoice,
    #[command(flatten)]
    pub common: ModelArgs,
    /// Weight of the label loss; the explanation loss gets `1 − alpha`.
    #[arg(long, default_value_t = 0.4, value_parser = parse_unit)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: ModelArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.2,0.4,0.6,0.8", value_parser = parse_unit)]
    pub alphas: Vec<f64>,
    /// Receives one checkpoint per alpha and `sweep.json`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint selected on the original validation split.
    #[arg(long)]
    pub original: PathBuf,
    /// Checkpoint selected on the corrected validation split.
    #[arg(long)]
    pub corrected: PathBuf,
    #[arg(long)]
    pub test_original: PathBuf,
    #[arg(long)]
    pub test_corrected: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Joint checkpoint (`pae` or `etp`).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Explanation-to-label checkpoint; required for `etp` generators.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub name: SplitName,
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value_t = vte_core::explainer::DEFAULT_BEAM_WIDTH, value_parser = parse_positive)]
    pub beam_width: usize,
    #[arg(long, default_value_t = vte_core::explainer::DEFAULT_MAX_LEN, value_parser = parse_positive)]
    pub max_len: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long, required_unless_present = "scored", conflicts_with = "scored")]
    pub generated: Option<PathBuf>,
    #[arg(long, requires = "generated")]
    pub gold: Option<PathBuf>,
    #[arg(long, default_value_t = 100, value_parser = parse_positive)]
    pub sample_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Review sheet to write.
    #[arg(long, requires = "generated")]
    pub out: Option<PathBuf>,
    /// A filled review sheet to summarize.
    #[arg(long)]
    pub scored: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// `name=path` of a split whose original neutral pairs are queued;
    /// repeatable.
    #[arg(long, required = true)]
    pub queue: Vec<String>,
    /// Split of trusted pairs; each instance's label is its gold label.
    #[arg(long)]
    pub trusted: PathBuf,
    /// Worker registry, one `{"worker_id", "approval_rate"}` record per line.
    #[arg(long)]
    pub workers: PathBuf,
    /// Append-only record log.
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub images: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long, default_value_t = vte_service::DEFAULT_APPROVAL_THRESHOLD, value_parser = parse_unit)]
    pub approval_threshold: f64,
    #[arg(long, default_value_t = vte_service::DEFAULT_RESERVATION_MINUTES)]
    pub reservation_minutes: i64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
