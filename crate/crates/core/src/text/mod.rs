//! Association strengths from raw text.
//!
//! Documents are split into sentences, and every sentence that mentions a
//! target word becomes the center of a context window. Each context is then
//! labeled with at most one group, either automatically (a word from exactly
//! one group's list occurs in it) or by human annotators. The association
//! strength with group `j` is the number of contexts labeled `j`.

mod annotate;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework::AssociationVector;
use crate::lexicon::{GroupSet, TargetConcept};

pub use annotate::{annotate_flow, highlight, AnnotateOutcome};

/// Default number of sentences in a context window.
pub const DEFAULT_CONTEXT_SENTENCES: usize = 3;

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "ft", "vs", "etc", "e.g", "i.e", "cf", "inc", "ltd", "co",
    "corp", "dept", "univ", "gen", "gov", "sen", "rep", "rev", "hon", "capt", "col", "lt", "sgt", "cmdr", "adm", "maj",
    "no", "nos", "fig", "figs", "vol", "pp", "approx", "est", "u.s", "u.k", "a.m", "p.m", "jan", "feb", "mar", "apr",
    "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec",
];

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '?' | '!')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}')
}

/// The whitespace-delimited word ending just before byte offset `end`,
/// stripped of leading punctuation and lowercased.
fn word_before(text: &str, end: usize) -> String {
    let start = text[..end]
        .rfind(char::is_whitespace)
        .map(|i| i + text[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    text[start..end]
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Rule-based sentence splitter.
///
/// A sentence ends at a run of `.`, `?` or `!` (plus closing quotes or
/// brackets) that is followed by whitespace and then an uppercase letter or
/// an opening quote. A period ending a known abbreviation never ends a
/// sentence.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < chars.len() && is_terminator(chars[j].1) {
            j += 1;
        }
        while j < chars.len() && is_closer(chars[j].1) {
            j += 1;
        }
        let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let boundary = k > j && k < chars.len() && (chars[k].1.is_uppercase() || is_opener(chars[k].1));
        let abbreviation = c == '.' && j == i + 1 && {
            let word = word_before(text, pos);
            ABBREVIATIONS.contains(&word.as_str())
        };
        if boundary && !abbreviation {
            let sentence = text[start..end].trim();
            if !sentence.is_empty() {
                sentences.push(sentence.to_string());
            }
            start = end;
        }
        i = j.max(i + 1);
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        sentences.push(rest.to_string());
    }
    sentences
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
}

/// An ordered collection of documents.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::new();
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::parse_msg(format!("duplicate document id {:?}", doc.id)));
            }
        }
        Ok(Corpus { documents })
    }

    /// Loads a directory of `.txt` files (document id = file name, sorted)
    /// or a JSONL file of `{"id": .., "text": ..}` records.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.is_dir() {
            let mut files: Vec<_> = fs::read_dir(path)?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
                .collect();
            files.sort();
            let documents = files
                .into_iter()
                .map(|p| {
                    let id = p.file_name().unwrap().to_string_lossy().into_owned();
                    Ok(Document {
                        id,
                        text: fs::read_to_string(&p)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Corpus::new(documents)
        } else {
            let reader = BufReader::new(fs::File::open(path)?);
            let mut documents = Vec::new();
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let doc: Document = serde_json::from_str(&line).map_err(|e| Error::parse(n + 1, e.to_string()))?;
                documents.push(doc);
            }
            Corpus::new(documents)
        }
    }

    pub fn segment(&self) -> SegmentedCorpus {
        SegmentedCorpus {
            documents: self
                .documents
                .iter()
                .map(|doc| {
                    let sentences = segment_sentences(&doc.text);
                    let tokens = sentences.iter().map(|s| tokenize(s)).collect();
                    SegmentedDocument {
                        id: doc.id.clone(),
                        sentences,
                        tokens,
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SegmentedDocument {
    pub id: String,
    pub sentences: Vec<String>,
    pub tokens: Vec<Vec<String>>,
}

/// A corpus split into sentences and tokens once, for reuse across targets.
#[derive(Debug, Clone)]
pub struct SegmentedCorpus {
    pub documents: Vec<SegmentedDocument>,
}

/// A window of sentences centered on a sentence that mentions the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Context {
    pub doc_id: String,
    pub center_sentence: usize,
    pub span: (usize, usize),
    pub tokens: Vec<String>,
    pub text: String,
    pub context_id: String,
}

pub fn context_id(doc_id: &str, center: usize) -> String {
    format!("{doc_id}:{center}")
}

/// Inclusive sentence span of an `m`-sentence window centered on `center`,
/// clipped to `[0, n)`. For even `m` the extra sentence goes after.
pub fn window_span(center: usize, m: usize, n: usize) -> (usize, usize) {
    let before = (m - 1) / 2;
    let after = m - 1 - before;
    (center.saturating_sub(before), (center + after).min(n - 1))
}

pub fn extract_contexts(corpus: &SegmentedCorpus, target: &TargetConcept, m: usize) -> Result<Vec<Context>> {
    if m == 0 {
        return Err(Error::Precondition("context sentence count must be at least 1".into()));
    }
    let mut contexts = Vec::new();
    for doc in &corpus.documents {
        let n = doc.sentences.len();
        for (center, tokens) in doc.tokens.iter().enumerate() {
            if !tokens.iter().any(|t| target.words.contains(t)) {
                continue;
            }
            let (first, last) = window_span(center, m, n);
            contexts.push(Context {
                doc_id: doc.id.clone(),
                center_sentence: center,
                span: (first, last),
                tokens: doc.tokens[first..=last].concat(),
                text: doc.sentences[first..=last].join(" "),
                context_id: context_id(&doc.id, center),
            });
        }
    }
    Ok(contexts)
}

/// Group `j` iff some token belongs to group `j` and none belongs to any
/// other group.
pub fn auto_associate<S: AsRef<str>>(tokens: &[S], groups: &GroupSet) -> Option<usize> {
    let mut found = None;
    for token in tokens {
        if let Some(j) = groups.group_of(token.as_ref()) {
            match found {
                None => found = Some(j),
                Some(prev) if prev != j => return None,
                _ => {}
            }
        }
    }
    found
}

/// Counts labeled contexts per group.
pub fn count_labels(labels: impl IntoIterator<Item = Option<usize>>, k: usize) -> Result<AssociationVector> {
    let mut counts = vec![0u64; k];
    for j in labels.into_iter().flatten() {
        counts[j] += 1;
    }
    AssociationVector::from_counts(&counts)
}

pub fn soa_text_auto(
    corpus: &SegmentedCorpus,
    target: &TargetConcept,
    groups: &GroupSet,
    m: usize,
) -> Result<AssociationVector> {
    let contexts = extract_contexts(corpus, target, m)?;
    soa_text_auto_contexts(&contexts, groups)
}

pub fn soa_text_auto_contexts(contexts: &[Context], groups: &GroupSet) -> Result<AssociationVector> {
    count_labels(contexts.iter().map(|c| auto_associate(&c.tokens, groups)), groups.k())
}

/// One annotator's judgment for one context: a group index or `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub context_id: String,
    pub annotator_id: String,
    pub label: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct AnnotationLine {
    context_id: String,
    annotator_id: String,
    label: String,
}

pub fn label_name(label: Option<usize>, groups: &GroupSet) -> String {
    match label {
        Some(j) => groups.groups()[j].name.clone(),
        None => "none".to_string(),
    }
}

pub fn parse_label(label: &str, groups: &GroupSet) -> Option<Option<usize>> {
    if label == "none" {
        Some(None)
    } else {
        groups.index_of(label).map(Some)
    }
}

pub fn read_annotations<R: BufRead>(reader: R, groups: &GroupSet) -> Result<Vec<AnnotationRecord>> {
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: AnnotationLine = serde_json::from_str(&line).map_err(|e| Error::parse(n + 1, e.to_string()))?;
        let label = parse_label(&raw.label, groups)
            .ok_or_else(|| Error::parse(n + 1, format!("unknown label {:?}", raw.label)))?;
        records.push(AnnotationRecord {
            context_id: raw.context_id,
            annotator_id: raw.annotator_id,
            label,
        });
    }
    Ok(records)
}

pub fn load_annotations(path: impl AsRef<Path>, groups: &GroupSet) -> Result<Vec<AnnotationRecord>> {
    read_annotations(BufReader::new(fs::File::open(path)?), groups)
}

pub fn write_annotation<W: Write>(writer: &mut W, record: &AnnotationRecord, groups: &GroupSet) -> Result<()> {
    let line = AnnotationLine {
        context_id: record.context_id.clone(),
        annotator_id: record.annotator_id.clone(),
        label: label_name(record.label, groups),
    };
    serde_json::to_writer(&mut *writer, &line)?;
    writer.write_all(b"\n")?;
    Ok(())
}

#[derive(Serialize)]
struct ContextLine<'a> {
    context_id: &'a str,
    doc_id: &'a str,
    span: [usize; 2],
    text: &'a str,
}

pub fn write_contexts<W: Write>(writer: &mut W, contexts: &[Context]) -> Result<()> {
    for c in contexts {
        let line = ContextLine {
            context_id: &c.context_id,
            doc_id: &c.doc_id,
            span: [c.span.0, c.span.1],
            text: &c.text,
        };
        serde_json::to_writer(&mut *writer, &line)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Latest label per (context, annotator); later records revise earlier ones.
pub fn latest_votes(annotations: &[AnnotationRecord]) -> BTreeMap<&str, BTreeMap<&str, Option<usize>>> {
    let mut votes: BTreeMap<&str, BTreeMap<&str, Option<usize>>> = BTreeMap::new();
    for a in annotations {
        votes
            .entry(a.context_id.as_str())
            .or_default()
            .insert(a.annotator_id.as_str(), a.label);
    }
    votes
}

/// Most frequent label; any tie for the top count yields `None`.
pub fn majority_label(votes: impl IntoIterator<Item = Option<usize>>) -> Option<usize> {
    let mut counts: HashMap<Option<usize>, usize> = HashMap::new();
    for v in votes {
        *counts.entry(v).or_default() += 1;
    }
    let top = counts.values().copied().max()?;
    let mut leaders = counts.iter().filter(|(_, &c)| c == top);
    match (leaders.next(), leaders.next()) {
        (Some((&label, _)), None) => label,
        _ => None,
    }
}

pub fn soa_text_human(
    contexts: &[Context],
    annotations: &[AnnotationRecord],
    groups: &GroupSet,
) -> Result<AssociationVector> {
    let known: HashSet<&str> = contexts.iter().map(|c| c.context_id.as_str()).collect();
    if let Some(a) = annotations.iter().find(|a| !known.contains(a.context_id.as_str())) {
        return Err(Error::UnknownContext(a.context_id.clone()));
    }
    if let Some(a) = annotations.iter().find(|a| a.label.is_some_and(|j| j >= groups.k())) {
        return Err(Error::Precondition(format!(
            "label index out of range in annotation for {:?}",
            a.context_id
        )));
    }
    let votes = latest_votes(annotations);
    count_labels(
        votes
            .values()
            .map(|by_annotator| majority_label(by_annotator.values().copied())),
        groups.k(),
    )
}
