//! Interactive labeling loop for the human association judgments.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use crate::error::Result;
use crate::lexicon::{GroupSet, TargetConcept};

use super::{label_name, write_annotation, AnnotationRecord, Context};

/// Wraps every occurrence of a target word in `[[...]]`.
pub fn highlight(text: &str, target: &TargetConcept) -> String {
    let mut out = String::with_capacity(text.len() + 16);
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| {
        if !word.is_empty() {
            if target.words.contains(&word.to_lowercase()) {
                out.push_str("[[");
                out.push_str(word);
                out.push_str("]]");
            } else {
                out.push_str(word);
            }
            word.clear();
        }
    };
    for c in text.chars() {
        if c.is_alphanumeric() {
            word.push(c);
        } else {
            flush(&mut word, &mut out);
            out.push(c);
        }
    }
    flush(&mut word, &mut out);
    out
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct AnnotateOutcome {
    /// Records written during this session, in order (revisions included).
    pub records: Vec<AnnotationRecord>,
    /// True when the session ended before every pending context was seen.
    pub interrupted: bool,
}

enum Answer {
    Label(Option<usize>),
    Skip,
    Back,
    Quit,
}

fn parse_answer(input: &str, groups: &GroupSet) -> Option<Answer> {
    let input = input.trim().to_lowercase();
    match input.as_str() {
        "none" => return Some(Answer::Label(None)),
        "skip" => return Some(Answer::Skip),
        "back" => return Some(Answer::Back),
        "quit" => return Some(Answer::Quit),
        _ => {}
    }
    if let Some(j) = groups.index_of(&input) {
        return Some(Answer::Label(Some(j)));
    }
    match input.parse::<usize>() {
        Ok(0) => Some(Answer::Label(None)),
        Ok(n) if n <= groups.k() => Some(Answer::Label(Some(n - 1))),
        _ => None,
    }
}

/// Prompts for a label for every context not in `done`.
///
/// Accepted answers: a group name or its 1-based number, `none` (or `0`),
/// `skip`, `back` (revisit the previously labeled context) and `quit`.
/// Each label is appended to `sink` as one JSONL record as soon as it is
/// given, so an interrupted session can resume by passing the already
/// annotated context ids in `done`. Revisions append a new record; readers
/// keep the latest one per annotator.
#[allow(clippy::too_many_arguments)]
pub fn annotate_flow<R: BufRead, P: Write, S: Write>(
    contexts: &[Context],
    groups: &GroupSet,
    target: &TargetConcept,
    annotator_id: &str,
    done: &HashSet<String>,
    mut input: R,
    mut prompt: P,
    mut sink: S,
) -> Result<AnnotateOutcome> {
    let pending: Vec<&Context> = contexts.iter().filter(|c| !done.contains(&c.context_id)).collect();
    let options = groups
        .groups()
        .iter()
        .enumerate()
        .map(|(j, g)| format!("{}={}", j + 1, g.name))
        .collect::<Vec<_>>()
        .join(", ");

    let mut outcome = AnnotateOutcome::default();
    let mut history: Vec<usize> = Vec::new();
    let mut i = 0;
    let mut line = String::new();
    while i < pending.len() {
        let context = pending[i];
        writeln!(
            prompt,
            "\n[{}/{}] {} (target: {})\n{}",
            i + 1,
            pending.len(),
            context.context_id,
            target.name,
            highlight(&context.text, target)
        )?;
        write!(prompt, "label ({options}, 0=none, skip, back, quit): ")?;
        prompt.flush()?;

        line.clear();
        if input.read_line(&mut line)? == 0 {
            outcome.interrupted = true;
            break;
        }
        match parse_answer(&line, groups) {
            Some(Answer::Label(label)) => {
                let record = AnnotationRecord {
                    context_id: context.context_id.clone(),
                    annotator_id: annotator_id.to_string(),
                    label,
                };
                write_annotation(&mut sink, &record, groups)?;
                sink.flush()?;
                writeln!(prompt, "recorded {}", label_name(label, groups))?;
                outcome.records.push(record);
                history.push(i);
                i += 1;
            }
            Some(Answer::Skip) => i += 1,
            Some(Answer::Back) => match history.pop() {
                Some(previous) => i = previous,
                None => writeln!(prompt, "nothing to revise")?,
            },
            Some(Answer::Quit) => {
                outcome.interrupted = true;
                break;
            }
            None => writeln!(prompt, "unrecognized answer {:?}", line.trim())?,
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{Group, WordList};
    use crate::text::{context_id, read_annotations};

    fn groups() -> GroupSet {
        GroupSet::new(vec![
            Group {
                name: "female".into(),
                words: WordList::new(["she"]).unwrap(),
            },
            Group {
                name: "male".into(),
                words: WordList::new(["he"]).unwrap(),
            },
        ])
        .unwrap()
    }

    fn contexts(n: usize) -> Vec<Context> {
        (0..n)
            .map(|i| Context {
                doc_id: "d".into(),
                center_sentence: i,
                span: (i, i),
                tokens: vec!["nurse".into()],
                text: format!("The Nurse number {i}."),
                context_id: context_id("d", i),
            })
            .collect()
    }

    fn run(input: &str, done: &HashSet<String>) -> (AnnotateOutcome, Vec<AnnotationRecord>, String) {
        let g = groups();
        let target = TargetConcept::single("nurse").unwrap();
        let mut sink = Vec::new();
        let mut prompt = Vec::new();
        let outcome = annotate_flow(
            &contexts(3),
            &g,
            &target,
            "ann",
            done,
            input.as_bytes(),
            &mut prompt,
            &mut sink,
        )
        .unwrap();
        let written = read_annotations(sink.as_slice(), &g).unwrap();
        (outcome, written, String::from_utf8(prompt).unwrap())
    }

    #[test]
    fn labels_every_context() {
        let (outcome, written, prompt) = run("female\nfemale\nfemale\n", &HashSet::new());
        assert_eq!(written.len(), 3);
        assert!(written.iter().all(|r| r.label == Some(0)));
        assert!(!outcome.interrupted);
        assert!(prompt.contains("[[Nurse]]"));
    }

    #[test]
    fn back_revises_previous_record() {
        let (_, written, _) = run("1\nback\n2\nnone\n1\n", &HashSet::new());
        let labels: Vec<_> = written.iter().map(|r| (r.context_id.as_str(), r.label)).collect();
        assert_eq!(
            labels,
            vec![("d:0", Some(0)), ("d:0", Some(1)), ("d:1", None), ("d:2", Some(0))]
        );
    }

    #[test]
    fn invalid_key_reprompts_without_writing() {
        let (_, written, prompt) = run("robot\n2\n", &HashSet::new());
        assert_eq!(written.len(), 1);
        assert_eq!(written[0].label, Some(1));
        assert!(prompt.contains("unrecognized answer"));
    }

    #[test]
    fn resume_skips_done_contexts() {
        let done: HashSet<String> = ["d:0".to_string(), "d:1".to_string()].into();
        let (outcome, written, prompt) = run("male\n", &done);
        assert_eq!(written.len(), 1);
        assert_eq!(written[0].context_id, "d:2");
        assert!(prompt.contains("[1/1]"));
        assert!(!outcome.interrupted);
    }

    #[test]
    fn eof_interrupts() {
        let (outcome, written, _) = run("skip\n", &HashSet::new());
        assert!(written.is_empty());
        assert!(outcome.interrupted);
    }
}
