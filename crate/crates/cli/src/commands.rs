//! One function per subcommand.

use std::collections::{BTreeMap, HashSet};
use std::fs::OpenOptions;
use std::io::BufWriter;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use divdist::contextual::{train_probe, TrainConfig};
use divdist::framework::{bias, AssociationVector, Provenance};
use divdist::lexicon::{GroupSet, TargetConcept};
use divdist::protocol::{
    self, directional_score, signed_binary_bias, ConvergentConfig, MeasurementSource, MitigationConfig,
    SensitivityPlan, StereotypeSpec,
};
use divdist::report::{num, nums, Report, Table};
use divdist::text::{extract_contexts, load_annotations, soa_text_human, AnnotationRecord, Corpus};
use divdist::Error;
use serde_json::{json, Value};

use crate::inputs::{
    config_error, contextual_source, load_corpus, load_embeddings, load_lexicon, load_probe, load_vectors, setup,
    source, split_assignment, Classify, CliResult, Digests, Failure, Setup,
};
use crate::output::{emit, finish};
use crate::*;

fn sorted_targets(targets: &[TargetConcept]) -> Vec<&TargetConcept> {
    let mut sorted: Vec<&TargetConcept> = targets.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    sorted
}

/// Fills in the fields every report carries: seed, input digests, and the
/// resolved configuration.
fn stamp(report: &mut Report, setup: &Setup, common: &Common, extra: Value) {
    report.seed = setup.seed;
    report.inputs = setup.digests.0.clone();
    let operation = std::mem::take(&mut report.config);
    report.config = json!({
        "groups": setup.groups().names(),
        "reference": setup.reference_spec.to_json(),
        "reference_resolved": setup.reference.probs(),
        "normalizer": common.normalizer.id(),
        "divergence": common.divergence.id(),
        "targets": sorted_targets(&setup.targets).iter().map(|t| t.name.as_str()).collect::<Vec<_>>(),
        "seed": setup.seed,
        "source": extra,
        "operation": operation,
    });
}

/// Per-target measurement table. `association` yields each target's
/// association vector; failures become per-target report errors.
fn measurement_report<F>(kind: &str, soa_variant: &str, setup: &Setup, common: &Common, mut association: F) -> Report
where
    F: FnMut(&TargetConcept) -> divdist::Result<AssociationVector>,
{
    let groups = setup.groups();
    let binary = groups.k() == 2;
    let mut report = Report::new(kind);
    let mut table = Table::new(
        "measurements",
        &["target", "value", "signed", "association", "observed"],
    );
    for target in sorted_targets(&setup.targets) {
        let outcome = association(target).and_then(|s| {
            let m = bias(
                &s,
                &setup.reference,
                common.normalizer,
                common.divergence,
                Provenance {
                    target: target.name.clone(),
                    groups: groups.names(),
                    soa_variant: soa_variant.to_string(),
                },
            )?;
            let signed = if binary {
                num(signed_binary_bias(&s, &setup.reference, common.normalizer)?)
            } else {
                Value::Null
            };
            Ok((s, m, signed))
        });
        match outcome {
            Ok((s, m, signed)) => table.push(vec![
                json!(target.name),
                num(m.value),
                signed,
                nums(s.values()),
                nums(&m.observed),
            ]),
            Err(e) => report.error(&target.name, e),
        }
    }
    report.set("n_targets", setup.targets.len());
    report.set("n_measured", table.rows.len());
    report.set("soa_variant", soa_variant);
    report.tables.push(table);
    report
}

fn check_context_sentences(m: usize) -> CliResult<()> {
    if m == 0 {
        return config_error("--context-sentences must be at least 1");
    }
    Ok(())
}

fn load_judgments(
    path: &std::path::Path,
    groups: &GroupSet,
    digests: &mut Digests,
    role: &str,
) -> CliResult<Vec<AnnotationRecord>> {
    if !path.exists() {
        return config_error(format!("annotations not found: {}", path.display()));
    }
    digests.add(role, path)?;
    load_annotations(path, groups)
        .with_context(|| format!("invalid annotations {}", path.display()))
        .config()
}

pub fn measure_text(args: MeasureTextArgs) -> CliResult<ExitCode> {
    check_context_sentences(args.context_sentences)?;
    let mut setup = setup(&args.common, false)?;
    let corpus = load_corpus(&args.corpus, &mut setup.digests, "corpus")?.segment();
    let m = args.context_sentences;
    let judgments = match &args.annotations {
        Some(p) => Some(load_judgments(
            p,
            &setup.lexicon.groups,
            &mut setup.digests,
            "annotations",
        )?),
        None => None,
    };
    let groups = setup.groups().clone();
    let mut matched: HashSet<String> = HashSet::new();
    let variant = if judgments.is_some() { "text-human" } else { "text-auto" };
    let mut report = measurement_report("measure/text", variant, &setup, &args.common, |target| {
        let contexts = extract_contexts(&corpus, target, m)?;
        match &judgments {
            None => divdist::text::soa_text_auto_contexts(&contexts, &groups),
            Some(all) => {
                let ids: HashSet<&str> = contexts.iter().map(|c| c.context_id.as_str()).collect();
                let own: Vec<AnnotationRecord> = all
                    .iter()
                    .filter(|a| ids.contains(a.context_id.as_str()))
                    .cloned()
                    .collect();
                matched.extend(own.iter().map(|a| a.context_id.clone()));
                soa_text_human(&contexts, &own, &groups)
            }
        }
    });
    if let Some(all) = &judgments {
        let unmatched = all.iter().filter(|a| !matched.contains(&a.context_id)).count();
        report.set("unmatched_annotations", unmatched);
    }
    stamp(
        &mut report,
        &setup,
        &args.common,
        json!({"kind": variant, "context_sentences": m}),
    );
    finish(&report, args.common.output.as_deref(), args.common.format)
}

pub fn measure_embeddings(args: MeasureEmbeddingsArgs) -> CliResult<ExitCode> {
    let mut setup = setup(&args.common, false)?;
    let table = load_embeddings(
        &args.embeddings,
        args.embedding_format,
        &mut setup.digests,
        "embeddings",
    )?;
    let groups = setup.groups().clone();
    let mut oov: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut report = measurement_report("measure/embeddings", "embeddings", &setup, &args.common, |target| {
        let a = divdist::embeddings::soa_we_vector(target, &groups, &table, args.cosine)?;
        if !a.oov.is_empty() {
            oov.insert(target.name.clone(), a.oov.clone());
        }
        Ok(a.soa)
    });
    if !oov.is_empty() {
        report.set("oov", json!(oov));
    }
    stamp(
        &mut report,
        &setup,
        &args.common,
        json!({"kind": "embeddings", "cosine_transform": args.cosine.id()}),
    );
    finish(&report, args.common.output.as_deref(), args.common.format)
}

fn run_source_measurement(
    kind: &str,
    source: MeasurementSource,
    description: Value,
    setup: &Setup,
    common: &Common,
) -> CliResult<ExitCode> {
    let groups = setup.groups().clone();
    let mut report = measurement_report(kind, source.soa_variant(), setup, common, |t| {
        source.association(t, &groups)
    });
    stamp(&mut report, setup, common, description);
    finish(&report, common.output.as_deref(), common.format)
}

pub fn measure_contextual(args: MeasureContextualArgs) -> CliResult<ExitCode> {
    let mut setup = setup(&args.common, false)?;
    let vectors = load_vectors(&args.vectors, &mut setup.digests, "vectors")?;
    let groups = setup.groups().clone();
    let source = contextual_source(vectors, args.probe.as_deref(), args.cosine, &groups, &mut setup.digests)?;
    let description = json!({
        "kind": if args.probe.is_some() { "contextual-probe" } else { "contextual-static" },
        "cosine_transform": args.cosine.id(),
    });
    run_source_measurement("measure/contextual", source, description, &setup, &args.common)
}

pub fn probe_infer(args: ProbeInferArgs) -> CliResult<ExitCode> {
    let mut setup = setup(&args.common, false)?;
    let vectors = load_vectors(&args.vectors, &mut setup.digests, "vectors")?;
    let probe = load_probe(&args.probe, &setup.lexicon.groups, vectors.dim(), &mut setup.digests)?;
    let source = MeasurementSource::Probe { vectors, probe };
    run_source_measurement(
        "probe/infer",
        source,
        json!({"kind": "contextual-probe"}),
        &setup,
        &args.common,
    )
}

pub fn probe_train(args: ProbeTrainArgs) -> CliResult<ExitCode> {
    let mut digests = Digests::default();
    let lexicon = load_lexicon(&args.lexicon, &mut digests)?;
    let vectors = load_vectors(&args.vectors, &mut digests, "vectors")?;
    if args.tolerance.is_nan() || args.tolerance <= 0.0 || args.max_epochs == 0 {
        return config_error("--tolerance must be positive and --max-epochs at least 1");
    }
    let config = TrainConfig {
        regularization: args.regularization,
        max_epochs: args.max_epochs,
        tolerance: args.tolerance,
        ..TrainConfig::default()
    };
    let model = train_probe(&vectors, &lexicon.groups, &config)
        .context("probe training failed")
        .data()?;
    if !model.training_meta.converged {
        log::warn!(
            "probe stopped after {} epochs with gradient norm {:e}",
            model.training_meta.epochs,
            model.training_meta.gradient_inf_norm
        );
    }
    emit(args.output.as_deref(), &model.to_json_string().data()?)?;
    Ok(ExitCode::SUCCESS)
}

pub fn annotate(args: AnnotateArgs) -> CliResult<ExitCode> {
    check_context_sentences(args.context_sentences)?;
    let mut digests = Digests::default();
    let lexicon = load_lexicon(&args.lexicon, &mut digests)?;
    let target = lexicon
        .target(&args.target)
        .cloned()
        .ok_or_else(|| anyhow!("target {:?} is not in the lexicon", args.target))
        .config()?;
    let corpus: Corpus = load_corpus(&args.corpus, &mut digests, "corpus")?;
    let contexts = extract_contexts(&corpus.segment(), &target, args.context_sentences).config()?;
    if let Some(path) = &args.contexts_out {
        let mut buffer = Vec::new();
        divdist::text::write_contexts(&mut buffer, &contexts).data()?;
        emit(Some(path), &String::from_utf8(buffer).expect("json is utf-8"))?;
    }
    let done: HashSet<String> = if args.annotations.exists() {
        load_annotations(&args.annotations, &lexicon.groups)
            .with_context(|| format!("invalid annotations {}", args.annotations.display()))
            .config()?
            .into_iter()
            .filter(|a| a.annotator_id == args.annotator)
            .map(|a| a.context_id)
            .collect()
    } else {
        HashSet::new()
    };
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&args.annotations)
        .with_context(|| format!("cannot open {}", args.annotations.display()))
        .config()?;
    let stdin = std::io::stdin();
    let outcome = divdist::text::annotate_flow(
        &contexts,
        &lexicon.groups,
        &target,
        &args.annotator,
        &done,
        stdin.lock(),
        std::io::stdout(),
        BufWriter::new(file),
    )
    .data()?;
    eprintln!(
        "{} judgments recorded{}",
        outcome.records.len(),
        if outcome.interrupted { "; rerun to resume" } else { "" }
    );
    Ok(ExitCode::SUCCESS)
}

/// Signed two-group score per profession in the stereotype file.
pub fn face(args: FaceArgs) -> CliResult<ExitCode> {
    let mut setup = setup(&args.common, false)?;
    if setup.groups().k() != 2 {
        return config_error("face validity needs exactly 2 groups");
    }
    let path = args
        .stereotypes
        .clone()
        .unwrap_or_else(|| divdist::data_dir().join("stereotypes.json"));
    if !path.exists() {
        return config_error(format!("stereotype file not found: {}", path.display()));
    }
    setup.digests.add("stereotypes", &path)?;
    let spec = StereotypeSpec::load(&path)
        .with_context(|| format!("invalid stereotype file {}", path.display()))
        .config()?;
    spec.validate(setup.groups()).config()?;
    let (source, description) = source(&args.source, &setup.lexicon.groups, &mut setup.digests)?;
    let mut scores = BTreeMap::new();
    let mut failures = Vec::new();
    for entry in &spec.entries {
        let target = match setup.lexicon.target(&entry.profession) {
            Some(t) => t.clone(),
            None => TargetConcept::single(&entry.profession).config()?,
        };
        let score = source
            .association(&target, setup.groups())
            .and_then(|s| signed_binary_bias(&s, &setup.reference, args.common.normalizer));
        match score {
            Ok(v) => {
                scores.insert(entry.profession.clone(), v);
            }
            Err(e) => failures.push(format!("{}: {e}", entry.profession)),
        }
    }
    if !failures.is_empty() {
        return Err(Failure::Data(anyhow!(
            "no measurement for {} profession(s): {}",
            failures.len(),
            failures.join("; ")
        )));
    }
    let mut report = protocol::face_validity(&scores, &spec, setup.groups()).data()?;
    stamp(&mut report, &setup, &args.common, description);
    finish(&report, args.common.output.as_deref(), args.common.format)
}

pub fn convergent(args: ConvergentArgs) -> CliResult<ExitCode> {
    check_context_sentences(args.context_sentences)?;
    let mut setup = setup(&args.common, true)?;
    let corpus = load_corpus(&args.corpus, &mut setup.digests, "corpus")?.segment();
    let mut annotations = BTreeMap::new();
    for spec in &args.annotations {
        let (m, path) = match spec.split_once('=') {
            Some((m, p)) => (
                m.parse::<usize>()
                    .ok()
                    .filter(|m| *m > 0)
                    .ok_or_else(|| anyhow!("bad context length in {spec:?}"))
                    .config()?,
                p,
            ),
            None => (args.context_sentences, spec.as_str()),
        };
        let records = load_judgments(
            std::path::Path::new(path),
            &setup.lexicon.groups,
            &mut setup.digests,
            &format!("annotations_m{m}"),
        )?;
        if annotations.insert(m, records).is_some() {
            return config_error(format!("annotations for context length {m} given twice"));
        }
    }
    let config = ConvergentConfig {
        context_lengths: annotations.keys().copied().collect(),
        permutations: args.permutations,
        seed: setup.seed,
    };
    let settings = setup.settings(&args.common);
    let mut report = protocol::convergent_validity(&corpus, &setup.targets, &settings, &annotations, &config).data()?;
    stamp(&mut report, &setup, &args.common, json!({"kind": "text"}));
    finish(&report, args.common.output.as_deref(), args.common.format)
}

fn directional_scores(
    source: &MeasurementSource,
    setup: &Setup,
    common: &Common,
    errors: &mut Vec<(String, Error)>,
) -> BTreeMap<String, f64> {
    let mut scores = BTreeMap::new();
    for target in sorted_targets(&setup.targets) {
        let score = source
            .association(target, setup.groups())
            .and_then(|s| directional_score(&s, &setup.reference, common.normalizer, common.divergence));
        match score {
            Ok(v) => {
                scores.insert(target.name.clone(), v);
            }
            Err(e) => errors.push((target.name.clone(), e)),
        }
    }
    scores
}

pub fn predictive(args: PredictiveArgs) -> CliResult<ExitCode> {
    let mut setup = setup(&args.common, true)?;
    if !args.census.exists() {
        return config_error(format!("census file not found: {}", args.census.display()));
    }
    setup.digests.add("census", &args.census)?;
    let census = protocol::CensusSeries::load(&args.census)
        .with_context(|| format!("invalid census file {}", args.census.display()))
        .config()?;
    let mut errors = Vec::new();
    let (report, description) = if args.decade_embeddings.is_empty() {
        let (source, description) = source(&args.source, &setup.lexicon.groups, &mut setup.digests)?;
        let decade = match args.decade {
            Some(d) => d,
            None => *census
                .decades()
                .last()
                .ok_or_else(|| anyhow!("census file has no rows"))
                .config()?,
        };
        let scores = directional_scores(&source, &setup, &args.common, &mut errors);
        let settings = setup.settings(&args.common);
        let report =
            protocol::predictive_contemporary(&scores, &census, decade, &settings, args.permutations, setup.seed);
        (report, description)
    } else {
        let mut by_decade = BTreeMap::new();
        for spec in &args.decade_embeddings {
            let (decade, path) = split_assignment(spec, "--decade-embeddings")?;
            let decade: i32 = decade.parse().map_err(|_| anyhow!("bad decade in {spec:?}")).config()?;
            let table = load_embeddings(
                std::path::Path::new(path),
                args.source.embedding_format,
                &mut setup.digests,
                &format!("embeddings_{decade}"),
            )?;
            let source = MeasurementSource::Embeddings {
                table,
                transform: args.source.cosine,
            };
            let mut decade_errors = Vec::new();
            let scores = directional_scores(&source, &setup, &args.common, &mut decade_errors);
            errors.extend(decade_errors.into_iter().map(|(t, e)| (format!("{decade}/{t}"), e)));
            by_decade.insert(decade, scores);
        }
        let settings = setup.settings(&args.common);
        let report = protocol::predictive_diachronic(&by_decade, &census, &settings, args.permutations, setup.seed);
        (
            report,
            json!({"kind": "embeddings", "cosine_transform": args.source.cosine.id()}),
        )
    };
    let mut report = report.data()?;
    for (item, e) in errors {
        report.error(item, e);
    }
    stamp(&mut report, &setup, &args.common, description);
    finish(&report, args.common.output.as_deref(), args.common.format)
}

pub fn amplification(args: AmplificationArgs) -> CliResult<ExitCode> {
    check_context_sentences(args.context_sentences)?;
    let mut setup = setup(&args.common, false)?;
    let mut sources = Vec::new();
    for spec in &args.sources {
        let (name, rest) = split_assignment(spec, "--source")?;
        let (kind, path) = rest
            .split_once(':')
            .ok_or_else(|| anyhow!("--source expects NAME=KIND:PATH, got {spec:?}"))
            .config()?;
        let path = std::path::Path::new(path);
        let role = format!("source_{name}");
        let source = match kind {
            "text" => MeasurementSource::Text {
                corpus: load_corpus(path, &mut setup.digests, &role)?.segment(),
                context_sentences: args.context_sentences,
            },
            "embeddings" => MeasurementSource::Embeddings {
                table: load_embeddings(
                    path,
                    divdist::embeddings::EmbeddingFormat::Auto,
                    &mut setup.digests,
                    &role,
                )?,
                transform: args.cosine,
            },
            "contextual" => {
                let vectors = load_vectors(path, &mut setup.digests, &role)?;
                let groups = setup.groups().clone();
                contextual_source(vectors, args.probe.as_deref(), args.cosine, &groups, &mut setup.digests)?
            }
            other => return config_error(format!("unknown source kind {other:?}")),
        };
        sources.push((name.to_string(), source));
    }
    let settings = setup.settings(&args.common);
    let mut report = protocol::amplification(&sources, &setup.targets, &settings).config()?;
    stamp(
        &mut report,
        &setup,
        &args.common,
        json!({"context_sentences": args.context_sentences, "cosine_transform": args.cosine.id()}),
    );
    finish(&report, args.common.output.as_deref(), args.common.format)
}

pub fn mitigation(args: MitigationArgs) -> CliResult<ExitCode> {
    let mut setup = setup(&args.common, false)?;
    let table = load_embeddings(
        &args.embeddings,
        args.embedding_format,
        &mut setup.digests,
        "embeddings",
    )?;
    let pairs = match &args.pairs {
        Some(path) => {
            if !path.exists() {
                return config_error(format!("pair file not found: {}", path.display()));
            }
            setup.digests.add("pairs", path)?;
            let text = std::fs::read_to_string(path).config()?;
            Some(
                serde_json::from_str::<Vec<(String, String)>>(&text)
                    .with_context(|| format!("invalid pair file {}", path.display()))
                    .config()?,
            )
        }
        None => None,
    };
    let config = MitigationConfig {
        mitigation: args.mitigation,
        pairs,
        normalizer: args.common.normalizer,
        divergence: args.common.divergence,
        transform: args.cosine,
    };
    let mut report = protocol::mitigation_eval(&table, &setup.targets, setup.groups(), &setup.reference, &config)
        .map_err(|e| match e {
            Error::Precondition(_) | Error::AllOov(_) => Failure::Config(e.into()),
            other => Failure::Data(other.into()),
        })?;
    stamp(&mut report, &setup, &args.common, json!({"kind": "embeddings"}));
    finish(&report, args.common.output.as_deref(), args.common.format)
}

pub fn sensitivity(args: SensitivityArgs) -> CliResult<ExitCode> {
    let mut setup = setup(&args.common, true)?;
    let (source, description) = source(&args.source, &setup.lexicon.groups, &mut setup.digests)?;
    let plan = SensitivityPlan {
        trials: args.trials,
        fraction: args.fraction,
        seed: setup.seed,
        grid: !args.no_grid,
    };
    plan.validate(setup.groups()).config()?;
    let settings = setup.settings(&args.common);
    let mut report = protocol::sensitivity(&source, &setup.targets, &settings, &plan).data()?;
    stamp(&mut report, &setup, &args.common, description);
    finish(&report, args.common.output.as_deref(), args.common.format)
}

pub fn agreement(args: AgreementArgs) -> CliResult<ExitCode> {
    let mut setup = setup(&args.common, false)?;
    let records = load_judgments(
        &args.annotations,
        &setup.lexicon.groups,
        &mut setup.digests,
        "annotations",
    )?;
    let mut report = protocol::agreement(&records, setup.groups()).data()?;
    stamp(&mut report, &setup, &args.common, Value::Null);
    finish(&report, args.common.output.as_deref(), args.common.format)
}
