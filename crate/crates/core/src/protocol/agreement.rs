//! Inter-annotator agreement.

use std::collections::BTreeSet;

use serde_json::json;

use crate::error::{Error, Result};
use crate::lexicon::GroupSet;
use crate::report::{num, Report};
use crate::stats::{fleiss_kappa, landis_koch_band};
use crate::text::{latest_votes, AnnotationRecord};

/// Fleiss' κ over the categories `groups… , none`, using each annotator's
/// latest label. Items not labeled by every annotator are dropped and
/// counted.
pub fn agreement(annotations: &[AnnotationRecord], groups: &GroupSet) -> Result<Report> {
    let annotators: BTreeSet<&str> = annotations.iter().map(|a| a.annotator_id.as_str()).collect();
    if annotators.len() < 2 {
        return Err(Error::Precondition(format!(
            "agreement needs at least 2 annotators, found {}",
            annotators.len()
        )));
    }
    let k = groups.k();
    let mut table = Vec::new();
    let mut dropped = 0usize;
    for by_annotator in latest_votes(annotations).values() {
        if by_annotator.len() != annotators.len() {
            dropped += 1;
            continue;
        }
        let mut row = vec![0usize; k + 1];
        for label in by_annotator.values() {
            match label {
                Some(j) if *j < k => row[*j] += 1,
                Some(j) => return Err(Error::Precondition(format!("label index {j} out of range"))),
                None => row[k] += 1,
            }
        }
        table.push(row);
    }
    if table.is_empty() {
        return Err(Error::Precondition("no item was labeled by every annotator".into()));
    }
    let kappa = fleiss_kappa(&table)?;
    let mut categories = groups.names();
    categories.push(crate::contextual::NONE_CLASS.to_string());
    let mut report = Report::new("protocol/agreement");
    report.config = json!({ "categories": categories });
    report.set("fleiss_kappa", num(kappa));
    report.set("band", landis_koch_band(kappa));
    report.set("n_items", table.len());
    report.set("n_dropped", dropped);
    report.set("n_annotators", annotators.len());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{Group, WordList};

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

    fn rec(ctx: &str, who: &str, label: Option<usize>) -> AnnotationRecord {
        AnnotationRecord {
            context_id: ctx.into(),
            annotator_id: who.into(),
            label,
        }
    }

    #[test]
    fn unanimous_is_one() {
        let labels = [Some(0), Some(1), None, Some(0)];
        let mut records = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            for who in ["a", "b", "c"] {
                records.push(rec(&format!("d:{i}"), who, *l));
            }
        }
        // partial item is dropped
        records.push(rec("d:9", "a", Some(0)));
        let r = agreement(&records, &groups()).unwrap();
        assert_eq!(r.summary["fleiss_kappa"], json!(1.0));
        assert_eq!(r.summary["band"], json!("almost perfect"));
        assert_eq!(r.summary["n_dropped"], json!(1));
    }

    #[test]
    fn single_annotator_rejected() {
        let records = vec![rec("d:0", "a", Some(0)), rec("d:1", "a", None)];
        assert!(matches!(agreement(&records, &groups()), Err(Error::Precondition(_))));
    }
}
