//! Bias amplification across measurement sources.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::framework::ordered_sum;
use crate::lexicon::TargetConcept;
use crate::report::{num, Report, Table};

use super::{MeasureSettings, MeasurementSource};

/// Measures every target in every source and reports, for each ordered
/// pair of sources `(A, B)` with `A` listed first, the per-target delta
/// `B − A` and its mean. A target that fails in a source is reported as an
/// error and left out of the deltas involving that source.
pub fn amplification(
    sources: &[(String, MeasurementSource)],
    targets: &[TargetConcept],
    settings: &MeasureSettings,
) -> Result<Report> {
    if sources.len() < 2 {
        return Err(Error::Precondition("amplification needs at least 2 sources".into()));
    }
    let mut names = std::collections::HashSet::new();
    for (name, _) in sources {
        if !names.insert(name.as_str()) {
            return Err(Error::Precondition(format!("source name {name:?} used twice")));
        }
    }
    let mut sorted: Vec<&TargetConcept> = targets.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));

    let mut report = Report::new("protocol/amplification");
    let mut values_table = Table::new("values", &["target", "source", "soa_variant", "value"]);
    // values[source][target]
    let mut values: Vec<Vec<Option<f64>>> = Vec::new();
    for (name, source) in sources {
        let mut column = Vec::new();
        for target in &sorted {
            match settings.value(source, target) {
                Ok(v) => {
                    values_table.push(vec![
                        json!(target.name),
                        json!(name),
                        json!(source.soa_variant()),
                        num(v),
                    ]);
                    column.push(Some(v));
                }
                Err(e) => {
                    report.error(format!("{name}/{}", target.name), e);
                    column.push(None);
                }
            }
        }
        values.push(column);
    }
    report.tables.push(values_table);

    for a in 0..sources.len() {
        for b in a + 1..sources.len() {
            let (na, nb) = (&sources[a].0, &sources[b].0);
            let mut table = Table::new(format!("delta:{na}:{nb}"), &["target", "value_a", "value_b", "delta"]);
            let mut deltas = Vec::new();
            for (i, target) in sorted.iter().enumerate() {
                if let (Some(x), Some(y)) = (values[a][i], values[b][i]) {
                    table.push(vec![json!(target.name), num(x), num(y), num(y - x)]);
                    deltas.push(y - x);
                }
            }
            let mean = if deltas.is_empty() {
                Value::Null
            } else {
                num(ordered_sum(&deltas) / deltas.len() as f64)
            };
            report.set(&format!("mean_delta:{na}:{nb}"), mean);
            report.tables.push(table);
        }
    }
    report.config = json!({
        "measure": settings.config(),
        "sources": sources.iter().map(|(n, s)| json!({"name": n, "soa_variant": s.soa_variant()})).collect::<Vec<_>>(),
    });
    report.set("n_targets", sorted.len());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{CosineTransform, EmbeddingTable};
    use crate::framework::{Distribution, Divergence, Normalizer};
    use crate::lexicon::{Group, GroupSet, WordList};

    fn setup() -> (GroupSet, Distribution, EmbeddingTable) {
        let groups = GroupSet::new(vec![
            Group {
                name: "female".into(),
                words: WordList::new(["she"]).unwrap(),
            },
            Group {
                name: "male".into(),
                words: WordList::new(["he"]).unwrap(),
            },
        ])
        .unwrap();
        let table = EmbeddingTable::from_pairs(
            2,
            [
                ("she", vec![1.0, 0.0]),
                ("he", vec![0.0, 1.0]),
                ("nurse", vec![0.9, 0.2]),
                ("chef", vec![0.3, 0.8]),
            ],
        )
        .unwrap();
        (groups, Distribution::uniform(2).unwrap(), table)
    }

    #[test]
    fn source_against_itself_is_zero_and_pairs_are_counted() {
        let (groups, reference, table) = setup();
        let settings = MeasureSettings {
            groups: &groups,
            reference: &reference,
            normalizer: Normalizer::Sum,
            divergence: Divergence::L1,
        };
        let source = || MeasurementSource::Embeddings {
            table: table.clone(),
            transform: CosineTransform::Affine,
        };
        let sources = vec![
            ("a".to_string(), source()),
            ("b".to_string(), source()),
            ("c".to_string(), source()),
        ];
        let targets: Vec<_> = ["nurse", "chef", "pilot"]
            .iter()
            .map(|w| TargetConcept::single(w).unwrap())
            .collect();
        let r = amplification(&sources, &targets, &settings).unwrap();
        let deltas: Vec<_> = r.tables.iter().filter(|t| t.name.starts_with("delta:")).collect();
        assert_eq!(deltas.len(), 3);
        for t in deltas {
            assert_eq!(t.rows.len(), 2);
            for row in &t.rows {
                assert_eq!(row[3], json!(0.0));
            }
        }
        // pilot is out of vocabulary in every source
        assert_eq!(r.errors.len(), 3);
        assert!(amplification(&sources[..1], &targets, &settings).is_err());
    }
}
