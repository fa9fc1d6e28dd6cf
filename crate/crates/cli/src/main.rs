mod commands;
mod inputs;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use divdist::embeddings::{CosineTransform, EmbeddingFormat};
use divdist::framework::{Divergence, Normalizer};
use divdist::protocol::Mitigation;

/// Divergence-from-reference social bias measurement.
#[derive(Parser)]
#[command(name = "divdist", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure bias for every target in the lexicon.
    #[command(subcommand)]
    Measure(MeasureCommand),
    /// Train a linear probe or use one to measure bias.
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Label contexts of one target interactively.
    Annotate(AnnotateArgs),
    /// Run one criterion of the validity and reliability battery.
    #[command(subcommand)]
    Protocol(ProtocolCommand),
}

#[derive(Subcommand)]
enum MeasureCommand {
    /// Count group-labeled contexts in a corpus.
    Text(MeasureTextArgs),
    /// Cosine associations in a static embedding table.
    Embeddings(MeasureEmbeddingsArgs),
    /// Contextual vectors, through a probe or by averaging to static vectors.
    Contextual(MeasureContextualArgs),
}

#[derive(Subcommand)]
enum ProbeCommand {
    /// Fit a probe on gold-labeled contextual vectors.
    Train(ProbeTrainArgs),
    /// Measure bias from a trained probe's predictions.
    Infer(ProbeInferArgs),
}

#[derive(Subcommand)]
enum ProtocolCommand {
    /// Do signed scores lean toward the stereotyped group?
    Face(FaceArgs),
    /// Human-labeled vs. rule-labeled text measurements.
    Convergent(ConvergentArgs),
    /// Correlation with census employment shares.
    Predictive(PredictiveArgs),
    /// Bias deltas between measurement sources.
    Amplification(AmplificationArgs),
    /// Projection-based mitigation under the targeted and framework measures.
    Mitigation(MitigationArgs),
    /// Stability under word-list perturbation and configuration changes.
    Sensitivity(SensitivityArgs),
    /// Fleiss' kappa over annotations.
    Agreement(AgreementArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Options shared by every report-producing command.
#[derive(Args, Clone)]
pub struct Common {
    /// Lexicon JSON with groups and targets [default: bundled gender lexicon]
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// "uniform" or a JSON array of group probabilities
    #[arg(long, default_value = "uniform")]
    pub reference: String,
    #[arg(long, default_value = "sum")]
    pub normalizer: Normalizer,
    #[arg(long, default_value = "l1")]
    pub divergence: Divergence,
    /// Seed for every random choice; recorded in the report
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report path [default: JSON on stdout]
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Restrict to these targets (repeatable)
    #[arg(long = "target")]
    pub targets: Vec<String>,
}

/// Where association strengths come from.
#[derive(Args, Clone)]
pub struct SourceArgs {
    /// Directory of .txt files or JSONL of {"id","text"}
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// word2vec or GloVe text file
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// JSONL contextual vectors
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Trained probe; without it contextual vectors are averaged per word
    #[arg(long)]
    pub probe: Option<PathBuf>,
    #[arg(long, default_value_t = divdist::text::DEFAULT_CONTEXT_SENTENCES)]
    pub context_sentences: usize,
    /// Map from cosine to association strength
    #[arg(long, default_value = "affine")]
    pub cosine: CosineTransform,
    #[arg(long, default_value = "auto")]
    pub embedding_format: EmbeddingFormat,
}

#[derive(Args)]
pub struct MeasureTextArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = divdist::text::DEFAULT_CONTEXT_SENTENCES)]
    pub context_sentences: usize,
    /// Human judgments; switches to the human-labeled variant
    #[arg(long)]
    pub annotations: Option<PathBuf>,
}

#[derive(Args)]
pub struct MeasureEmbeddingsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, default_value = "auto")]
    pub embedding_format: EmbeddingFormat,
    #[arg(long, default_value = "affine")]
    pub cosine: CosineTransform,
}

#[derive(Args)]
pub struct MeasureContextualArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long)]
    pub probe: Option<PathBuf>,
    #[arg(long, default_value = "affine")]
    pub cosine: CosineTransform,
}

#[derive(Args)]
pub struct ProbeTrainArgs {
    /// Lexicon whose groups name the probe classes [default: bundled gender lexicon]
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Gold-labeled JSONL contextual vectors
    #[arg(long)]
    pub vectors: PathBuf,
    /// Model path [default: stdout]
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    pub regularization: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
}

#[derive(Args)]
pub struct ProbeInferArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub vectors: PathBuf,
    #[arg(long)]
    pub probe: PathBuf,
}

#[derive(Args)]
pub struct AnnotateArgs {
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Target whose contexts are labeled
    #[arg(long)]
    pub target: String,
    #[arg(long)]
    pub annotator: String,
    /// JSONL file judgments are appended to; resumes where it left off
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value_t = divdist::text::DEFAULT_CONTEXT_SENTENCES)]
    pub context_sentences: usize,
    /// Also write the extracted contexts as JSONL
    #[arg(long)]
    pub contexts_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct FaceArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: SourceArgs,
    /// JSON [{"profession","group"}] [default: bundled stereotypes]
    #[arg(long)]
    pub stereotypes: Option<PathBuf>,
}

#[derive(Args)]
pub struct ConvergentArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Judgments as M=PATH per context length, or PATH for --context-sentences
    #[arg(long, required = true)]
    pub annotations: Vec<String>,
    #[arg(long, default_value_t = divdist::text::DEFAULT_CONTEXT_SENTENCES)]
    pub context_sentences: usize,
    #[arg(long, default_value_t = divdist::stats::DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
}

#[derive(Args)]
pub struct PredictiveArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: SourceArgs,
    /// CSV with header profession,decade,group,share
    #[arg(long)]
    pub census: PathBuf,
    /// Census decade to correlate against [default: latest]
    #[arg(long)]
    pub decade: Option<i32>,
    /// DECADE=PATH embedding tables; switches to the diachronic mode
    #[arg(long = "decade-embeddings")]
    pub decade_embeddings: Vec<String>,
    #[arg(long, default_value_t = divdist::stats::DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
}

#[derive(Args)]
pub struct AmplificationArgs {
    #[command(flatten)]
    pub common: Common,
    /// NAME=KIND:PATH with KIND one of text, embeddings, contextual (repeatable)
    #[arg(long = "source", required = true)]
    pub sources: Vec<String>,
    /// Probe for contextual sources; without it vectors are averaged per word
    #[arg(long)]
    pub probe: Option<PathBuf>,
    #[arg(long, default_value_t = divdist::text::DEFAULT_CONTEXT_SENTENCES)]
    pub context_sentences: usize,
    #[arg(long, default_value = "affine")]
    pub cosine: CosineTransform,
}

#[derive(Args)]
pub struct MitigationArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, default_value = "auto")]
    pub embedding_format: EmbeddingFormat,
    #[arg(long, default_value = "hard")]
    pub mitigation: Mitigation,
    /// JSON array of [word, word] definitional pairs [default: group lists zipped]
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long, default_value = "affine")]
    pub cosine: CosineTransform,
}

#[derive(Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.1)]
    pub fraction: f64,
    /// Skip the normalizer/divergence/transform grid
    #[arg(long)]
    pub no_grid: bool,
}

#[derive(Args)]
pub struct AgreementArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub annotations: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Measure(MeasureCommand::Text(a)) => commands::measure_text(a),
        Command::Measure(MeasureCommand::Embeddings(a)) => commands::measure_embeddings(a),
        Command::Measure(MeasureCommand::Contextual(a)) => commands::measure_contextual(a),
        Command::Probe(ProbeCommand::Train(a)) => commands::probe_train(a),
        Command::Probe(ProbeCommand::Infer(a)) => commands::probe_infer(a),
        Command::Annotate(a) => commands::annotate(a),
        Command::Protocol(ProtocolCommand::Face(a)) => commands::face(a),
        Command::Protocol(ProtocolCommand::Convergent(a)) => commands::convergent(a),
        Command::Protocol(ProtocolCommand::Predictive(a)) => commands::predictive(a),
        Command::Protocol(ProtocolCommand::Amplification(a)) => commands::amplification(a),
        Command::Protocol(ProtocolCommand::Mitigation(a)) => commands::mitigation(a),
        Command::Protocol(ProtocolCommand::Sensitivity(a)) => commands::sensitivity(a),
        Command::Protocol(ProtocolCommand::Agreement(a)) => commands::agreement(a),
    };
    match outcome {
        Ok(code) => code,
        Err(failure) => failure.report(),
    }
}
