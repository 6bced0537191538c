use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_CODES: &str = "\
Exit codes:
  0  all requested artifacts were written
  1  internal error
  2  usage error (unknown flag, missing or conflicting options)
  3  a file could not be read or written
  4  invalid input content (malformed JSON, bad schema, template or dataset)
  5  mismatch between inputs (pool or label set does not fit the schema,
     correlation inputs cover different sets)
  6  backend failure (unsupported tap, context overflow, generation error)";

#[derive(Parser)]
#[command(name = "loads", version, about = "Label-set selection by FFN activation kurtosis", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Build candidate label pools.
    #[command(subcommand, after_help = EXIT_CODES)]
    Pool(PoolCommand),
    /// Choose a label set.
    #[command(subcommand, after_help = EXIT_CODES)]
    Select(SelectCommand),
    /// Classify a dataset with one label set.
    #[command(subcommand, after_help = EXIT_CODES)]
    Eval(EvalCommand),
    /// Score every variant of a pool.
    #[command(after_help = EXIT_CODES)]
    Sweep(SweepArgs),
    /// Correlation and interpretability probes.
    #[command(subcommand, after_help = EXIT_CODES)]
    Analyze(AnalyzeCommand),
    /// Model weight utilities.
    #[command(subcommand, after_help = EXIT_CODES)]
    Model(ModelCommand),
}

#[derive(Args, Clone)]
pub struct OutputArgs {
    /// Directory for report files (created if missing).
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub workers: u16,
}

#[derive(Args, Clone)]
pub struct TaskArgs {
    /// Class schema JSON.
    #[arg(long)]
    pub schema: PathBuf,
    /// Dataset JSONL.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Prompt template JSON; the built-in stance template when omitted.
    #[arg(long)]
    pub template: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Nanoformer,
    Replay,
    Synthetic,
}

#[derive(Args, Clone)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "nanoformer")]
    pub backend: BackendKind,
    /// Vocabulary file (required by every backend).
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Weight container (nanoformer).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Recorded traces JSONL (replay).
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// Synthetic profile JSON (synthetic).
    #[arg(long)]
    pub profile: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct SampleArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub sample_size: u64,
    /// Cover every gold class before filling the rest uniformly.
    #[arg(long)]
    pub stratified: bool,
}

/// Label set to use; the schema's original labels when neither is given.
#[derive(Args, Clone)]
pub struct SetArgs {
    /// Take the chosen set from a selection report.
    #[arg(long, conflicts_with = "words")]
    pub selection: Option<PathBuf>,
    /// Comma-separated words in schema role order.
    #[arg(long, value_delimiter = ',')]
    pub words: Option<Vec<String>>,
}

#[derive(Subcommand)]
pub enum PoolCommand {
    /// Expand a lexicon into candidate label sets.
    Build(PoolBuildArgs),
}

#[derive(Args)]
pub struct PoolBuildArgs {
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Add every ordering of each set.
    #[arg(long)]
    pub orders: bool,
    /// Rewrite each set at this elaboration level.
    #[arg(long, requires = "elaborations")]
    pub elaborate: Option<String>,
    /// Elaboration templates JSON.
    #[arg(long)]
    pub elaborations: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Subcommand)]
pub enum SelectCommand {
    /// Rank a pool by mean activation kurtosis and keep the lowest.
    Loads(SelectLoadsArgs),
    /// Comparison strategies.
    Baseline(BaselineArgs),
}

#[derive(Args)]
pub struct SelectLoadsArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub sample: SampleArgs,
    /// Candidate pool JSON.
    #[arg(long)]
    pub pool: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    Original,
    Verbalizer,
    Selfgen,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    Sum,
    Max,
}

#[derive(Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub method: BaselineMethod,
    #[arg(long)]
    pub schema: PathBuf,
    /// Dataset JSONL (verbalizer, selfgen).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Prompt template listing the options (verbalizer).
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Options-free template (selfgen); the built-in open template when omitted.
    #[arg(long)]
    pub open_template: Option<PathBuf>,
    /// Lexicon supplying candidate words (verbalizer, selfgen).
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Restrict verbalizer candidates to the original labels.
    #[arg(long)]
    pub original_only: bool,
    #[arg(long, value_enum, default_value = "sum")]
    pub aggregation: AggregationArg,
    /// Class weights JSON for wF2 scoring (verbalizer).
    #[arg(long)]
    pub class_weights: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub sample: SampleArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Subcommand)]
pub enum EvalCommand {
    /// Classify every example and score the predictions.
    Run(EvalRunArgs),
}

#[derive(Args)]
pub struct EvalRunArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub set: SetArgs,
    /// Class weights JSON for wF2.
    #[arg(long)]
    pub class_weights: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKindArg {
    Lexical,
    Order,
    Elaboration,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(value_enum)]
    pub kind: SweepKindArg,
    #[command(flatten)]
    pub task: TaskArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Base sets; the original labels when omitted.
    #[arg(long)]
    pub pool: Option<PathBuf>,
    /// Elaboration templates JSON (elaboration sweeps).
    #[arg(long)]
    pub elaborations: Option<PathBuf>,
    /// Class weights JSON; scores by wF2 instead of macro-F1.
    #[arg(long)]
    pub class_weights: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Subcommand)]
pub enum AnalyzeCommand {
    /// Spearman correlation between sweep scores and mean kurtosis.
    Correlate(CorrelateArgs),
    /// Mean prompt perplexity per label set.
    Perplexity(PerplexityArgs),
    /// Attention-key similarity of the two label words.
    Keysim(ProbeArgs),
    /// Per-layer vocabulary rank of the first generated token.
    Logitlens(ProbeArgs),
}

#[derive(Args)]
pub struct CorrelateArgs {
    /// Sweep report JSON.
    #[arg(long)]
    pub sweep: PathBuf,
    /// Kurtosis report JSON.
    #[arg(long)]
    pub kurtosis: PathBuf,
    /// Dataset name for the table row.
    #[arg(long, default_value = "dataset")]
    pub name: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct PerplexityArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub set: SetArgs,
    /// Score every set in this pool instead of a single set.
    #[arg(long, conflicts_with_all = ["selection", "words"])]
    pub pool: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub task: TaskArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub set: SetArgs,
    #[command(flatten)]
    pub sample: SampleArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Subcommand)]
pub enum ModelCommand {
    /// Write a randomly initialised weight container.
    InitRandom(InitRandomArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ActivationArg {
    Silu,
    Gelu,
}

#[derive(Args)]
pub struct InitRandomArgs {
    /// Vocabulary file; fixes the vocabulary size.
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub d_model: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 64)]
    pub d_ff: usize,
    #[arg(long, value_enum, default_value = "silu")]
    pub act: ActivationArg,
    #[arg(long, default_value_t = 512)]
    pub max_context: usize,
    /// Disable positional encodings.
    #[arg(long)]
    pub no_positions: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}
