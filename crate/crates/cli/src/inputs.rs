//! Loading and validating command inputs, and the exit-code contract.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use divdist::contextual::{reduce_to_static, ContextualVectorSet, ProbeModel};
use divdist::embeddings::{CosineTransform, EmbeddingFormat, EmbeddingTable};
use divdist::framework::{Distribution, ReferenceSpec};
use divdist::lexicon::{GroupSet, Lexicon, TargetConcept};
use divdist::protocol::{MeasureSettings, MeasurementSource};
use divdist::report::digest_path;
use divdist::text::Corpus;

use crate::{Common, SourceArgs};

/// Why a command stopped: bad configuration (exit 2) or a data-level
/// failure (exit 1).
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Data(anyhow::Error),
}

impl Failure {
    pub fn report(self) -> ExitCode {
        match self {
            Failure::Config(e) => {
                eprintln!("configuration error: {e:#}");
                ExitCode::from(2)
            }
            Failure::Data(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub trait Classify<T> {
    fn config(self) -> CliResult<T>;
    fn data(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> CliResult<T> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn data(self) -> CliResult<T> {
        self.map_err(|e| Failure::Data(e.into()))
    }
}

pub fn config_error<T>(message: impl Into<String>) -> CliResult<T> {
    Err(Failure::Config(anyhow!(message.into())))
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if !path.exists() {
        return config_error(format!("{what} not found: {}", path.display()));
    }
    Ok(())
}

/// Digests of every input file, keyed by role.
#[derive(Default)]
pub struct Digests(pub BTreeMap<String, String>);

impl Digests {
    pub fn add(&mut self, role: &str, path: &Path) -> CliResult<()> {
        let digest = digest_path(path)
            .with_context(|| format!("cannot read {role} {}", path.display()))
            .config()?;
        self.0.insert(role.to_string(), digest);
        Ok(())
    }
}

/// Lexicon, resolved reference, and the targets selected for a run.
pub struct Setup {
    pub lexicon: Lexicon,
    pub reference: Distribution,
    pub reference_spec: ReferenceSpec,
    pub targets: Vec<TargetConcept>,
    pub digests: Digests,
    pub seed: u64,
}

impl Setup {
    pub fn groups(&self) -> &GroupSet {
        &self.lexicon.groups
    }

    pub fn settings<'a>(&'a self, common: &Common) -> MeasureSettings<'a> {
        MeasureSettings {
            groups: &self.lexicon.groups,
            reference: &self.reference,
            normalizer: common.normalizer,
            divergence: common.divergence,
        }
    }
}

pub fn lexicon_path(path: &Option<PathBuf>) -> PathBuf {
    path.clone()
        .unwrap_or_else(|| divdist::data_dir().join("lexicons").join("gender.json"))
}

pub fn load_lexicon(path: &Option<PathBuf>, digests: &mut Digests) -> CliResult<Lexicon> {
    let path = lexicon_path(path);
    require_file(&path, "lexicon")?;
    digests.add("lexicon", &path)?;
    Lexicon::load(&path)
        .with_context(|| format!("invalid lexicon {}", path.display()))
        .config()
}

fn parse_reference(text: &str) -> CliResult<ReferenceSpec> {
    let path = Path::new(text);
    let source = if text != "uniform" && path.is_file() {
        std::fs::read_to_string(path)
            .with_context(|| format!("cannot read reference {text}"))
            .config()?
    } else {
        text.to_string()
    };
    source
        .parse::<ReferenceSpec>()
        .with_context(|| format!("invalid reference {text:?}"))
        .config()
}

pub fn setup(common: &Common, require_seed: bool) -> CliResult<Setup> {
    if require_seed && common.seed.is_none() {
        return config_error("--seed is required for this command");
    }
    if common.format == crate::Format::Csv && common.output.is_none() {
        return config_error("--format csv needs --output");
    }
    let mut digests = Digests::default();
    let lexicon = load_lexicon(&common.lexicon, &mut digests)?;
    let reference_spec = parse_reference(&common.reference)?;
    let reference = reference_spec
        .resolve(lexicon.groups.k())
        .context("reference does not fit the groups")
        .config()?;
    let targets = if common.targets.is_empty() {
        lexicon.targets.clone()
    } else {
        common
            .targets
            .iter()
            .map(|name| {
                lexicon
                    .target(name)
                    .cloned()
                    .ok_or_else(|| anyhow!("target {name:?} is not in the lexicon"))
            })
            .collect::<anyhow::Result<Vec<_>>>()
            .config()?
    };
    if targets.is_empty() {
        return config_error("the lexicon defines no targets");
    }
    Ok(Setup {
        lexicon,
        reference,
        reference_spec,
        targets,
        digests,
        seed: common.seed.unwrap_or(0),
    })
}

pub fn load_corpus(path: &Path, digests: &mut Digests, role: &str) -> CliResult<Corpus> {
    require_file(path, "corpus")?;
    digests.add(role, path)?;
    Corpus::load(path)
        .with_context(|| format!("invalid corpus {}", path.display()))
        .config()
}

pub fn load_embeddings(
    path: &Path,
    format: EmbeddingFormat,
    digests: &mut Digests,
    role: &str,
) -> CliResult<EmbeddingTable> {
    require_file(path, "embedding file")?;
    digests.add(role, path)?;
    EmbeddingTable::load(path, format)
        .with_context(|| format!("invalid embedding file {}", path.display()))
        .config()
}

pub fn load_vectors(path: &Path, digests: &mut Digests, role: &str) -> CliResult<ContextualVectorSet> {
    require_file(path, "vector file")?;
    digests.add(role, path)?;
    ContextualVectorSet::load(path)
        .with_context(|| format!("invalid vector file {}", path.display()))
        .config()
}

/// Loads a probe and checks it fits the groups and the vectors.
pub fn load_probe(path: &Path, groups: &GroupSet, dim: usize, digests: &mut Digests) -> CliResult<ProbeModel> {
    require_file(path, "probe")?;
    digests.add("probe", path)?;
    let probe = ProbeModel::load(path)
        .with_context(|| format!("invalid probe {}", path.display()))
        .config()?;
    probe
        .check_classes(groups)
        .context("probe classes do not match the groups")
        .config()?;
    if probe.dim() != dim {
        return config_error(format!(
            "probe expects {}-dimensional vectors, the vector file has dimension {dim}",
            probe.dim()
        ));
    }
    Ok(probe)
}

pub fn contextual_source(
    vectors: ContextualVectorSet,
    probe: Option<&Path>,
    transform: CosineTransform,
    groups: &GroupSet,
    digests: &mut Digests,
) -> CliResult<MeasurementSource> {
    match probe {
        Some(p) => {
            let probe = load_probe(p, groups, vectors.dim(), digests)?;
            Ok(MeasurementSource::Probe { vectors, probe })
        }
        None => {
            let table = reduce_to_static(&vectors)
                .context("cannot average contextual vectors")
                .config()?;
            Ok(MeasurementSource::Embeddings { table, transform })
        }
    }
}

/// Builds the single measurement source named by the source flags.
pub fn source(
    args: &SourceArgs,
    groups: &GroupSet,
    digests: &mut Digests,
) -> CliResult<(MeasurementSource, serde_json::Value)> {
    let given = [args.corpus.is_some(), args.embeddings.is_some(), args.vectors.is_some()]
        .iter()
        .filter(|b| **b)
        .count();
    if given != 1 {
        return config_error("give exactly one of --corpus, --embeddings, --vectors");
    }
    if args.context_sentences == 0 {
        return config_error("--context-sentences must be at least 1");
    }
    if let Some(path) = &args.corpus {
        let corpus = load_corpus(path, digests, "corpus")?;
        let description = serde_json::json!({"kind": "text", "context_sentences": args.context_sentences});
        return Ok((
            MeasurementSource::Text {
                corpus: corpus.segment(),
                context_sentences: args.context_sentences,
            },
            description,
        ));
    }
    if let Some(path) = &args.embeddings {
        let table = load_embeddings(path, args.embedding_format, digests, "embeddings")?;
        let description = serde_json::json!({"kind": "embeddings", "cosine_transform": args.cosine.id()});
        return Ok((
            MeasurementSource::Embeddings {
                table,
                transform: args.cosine,
            },
            description,
        ));
    }
    let path = args.vectors.as_ref().expect("one source is set");
    let vectors = load_vectors(path, digests, "vectors")?;
    let description = serde_json::json!({
        "kind": if args.probe.is_some() { "contextual-probe" } else { "contextual-static" },
        "cosine_transform": args.cosine.id(),
    });
    Ok((
        contextual_source(vectors, args.probe.as_deref(), args.cosine, groups, digests)?,
        description,
    ))
}

/// Splits `KEY=VALUE`.
pub fn split_assignment<'a>(text: &'a str, flag: &str) -> CliResult<(&'a str, &'a str)> {
    match text.split_once('=') {
        Some((k, v)) if !k.is_empty() && !v.is_empty() => Ok((k, v)),
        _ => config_error(format!("{flag} expects KEY=VALUE, got {text:?}")),
    }
}
