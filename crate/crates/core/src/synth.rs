//! Planted synthetic data with known ground truth: corpora whose
//! group-association counts are fixed by construction, rule-consistent
//! annotations with controlled noise, and Gaussian clusters for probes.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::contextual::{ContextualRecord, ContextualVectorSet, NONE_CLASS};
use crate::error::{Error, Result};
use crate::lexicon::GroupSet;
use crate::text::{auto_associate, AnnotationRecord, Context, Corpus, Document};

const FILLER: [&str; 8] = [
    "The weather was mild that week.",
    "Nothing else of note happened.",
    "A train passed in the distance.",
    "The report was filed on time.",
    "Coffee was served at noon.",
    "The office stayed quiet all afternoon.",
    "Rain was expected by evening.",
    "Several emails arrived later.",
];

/// Mentions to plant for one target word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedTarget {
    pub word: String,
    /// Contexts mentioning exactly one word of group `j`, per group.
    pub group_counts: Vec<usize>,
    /// Contexts mentioning no group word.
    pub unassociated: usize,
}

/// One document per planted mention: a filler sentence, the mention
/// sentence, and another filler sentence. With windows of up to three
/// sentences every context holds exactly one mention and at most one group
/// word, so rule-based counts equal `group_counts`. Group words are drawn
/// uniformly from the group's list.
pub fn planted_corpus(targets: &[PlantedTarget], groups: &GroupSet, seed: u64) -> Result<Corpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut documents = Vec::new();
    for target in targets {
        if target.group_counts.len() != groups.k() {
            return Err(Error::LengthMismatch {
                expected: groups.k(),
                found: target.group_counts.len(),
            });
        }
        let mut mentions: Vec<Option<usize>> = Vec::new();
        for (j, &n) in target.group_counts.iter().enumerate() {
            mentions.extend(std::iter::repeat_n(Some(j), n));
        }
        mentions.extend(std::iter::repeat_n(None, target.unassociated));
        for (i, mention) in mentions.into_iter().enumerate() {
            let sentence = match mention {
                Some(j) => {
                    let word = groups.groups()[j]
                        .words
                        .words()
                        .choose(&mut rng)
                        .expect("non-empty list");
                    format!("Later the {} spoke with {} about work.", target.word, word)
                }
                None => format!("Later the {} finished the shift alone.", target.word),
            };
            let before = FILLER.choose(&mut rng).expect("filler");
            let after = FILLER.choose(&mut rng).expect("filler");
            documents.push(Document {
                id: format!("{}-{i:05}", target.word),
                text: format!("{before} {sentence} {after}"),
            });
        }
    }
    Corpus::new(documents)
}

/// Rule-based labels for `contexts` from each annotator, where each label is
/// independently replaced with probability `noise` by a different category
/// drawn uniformly from the groups and "none".
pub fn noisy_annotations(
    contexts: &[Context],
    groups: &GroupSet,
    annotators: &[&str],
    noise: f64,
    seed: u64,
) -> Vec<AnnotationRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = groups.k();
    let mut out = Vec::new();
    for c in contexts {
        let truth = auto_associate(&c.tokens, groups);
        for who in annotators {
            let label = if rng.random::<f64>() < noise {
                let as_index = |l: Option<usize>| l.unwrap_or(k);
                let mut pick = rng.random_range(0..k);
                if pick >= as_index(truth) {
                    pick += 1;
                }
                (pick < k).then_some(pick)
            } else {
                truth
            };
            out.push(AnnotationRecord {
                context_id: c.context_id.clone(),
                annotator_id: who.to_string(),
                label,
            });
        }
    }
    out
}

/// Isotropic unit-variance Gaussian clusters in `dim` dimensions, one per
/// class, with class `j` centered at `(separation/√2)·e_j` so every pair
/// of centers is `separation` apart. Class `j` gets exactly `counts[j]`
/// records, labeled with its name; the records are interleaved by a seeded
/// shuffle.
pub fn planted_clusters(
    word: &str,
    classes: &[&str],
    counts: &[usize],
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<ContextualVectorSet> {
    if classes.len() != counts.len() {
        return Err(Error::LengthMismatch {
            expected: classes.len(),
            found: counts.len(),
        });
    }
    if classes.len() > dim {
        return Err(Error::Precondition(format!(
            "{} classes need at least as many dimensions, got {dim}",
            classes.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = separation / std::f64::consts::SQRT_2;
    let mut labels: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(j, &n)| std::iter::repeat_n(j, n))
        .collect();
    rand::seq::SliceRandom::shuffle(labels.as_mut_slice(), &mut rng);
    let records = labels
        .into_iter()
        .enumerate()
        .map(|(i, j)| {
            let mut vector: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            vector[j] += offset;
            ContextualRecord {
                word: word.to_string(),
                context_id: format!("c{i:06}"),
                vector,
                label: Some(classes[j].to_string()),
            }
        })
        .collect();
    ContextualVectorSet::new(records)
}

/// Class list of a probe over `groups`: the group names then "none".
pub fn probe_classes(groups: &GroupSet) -> Vec<String> {
    let mut classes = groups.names();
    classes.push(NONE_CLASS.to_string());
    classes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{Group, TargetConcept, WordList};
    use crate::text::{extract_contexts, soa_text_auto};

    fn groups() -> GroupSet {
        GroupSet::new(vec![
            Group {
                name: "female".into(),
                words: WordList::new(["she", "her", "woman"]).unwrap(),
            },
            Group {
                name: "male".into(),
                words: WordList::new(["he", "him", "man"]).unwrap(),
            },
        ])
        .unwrap()
    }

    #[test]
    fn planted_counts_are_recovered_for_every_window() {
        let g = groups();
        let targets = [PlantedTarget {
            word: "nurse".into(),
            group_counts: vec![7, 3],
            unassociated: 2,
        }];
        let corpus = planted_corpus(&targets, &g, 1).unwrap().segment();
        let t = TargetConcept::single("nurse").unwrap();
        for m in 1..=3 {
            assert_eq!(soa_text_auto(&corpus, &t, &g, m).unwrap().values(), &[7.0, 3.0]);
            assert_eq!(extract_contexts(&corpus, &t, m).unwrap().len(), 12);
        }
    }

    #[test]
    fn noiseless_annotations_match_rule() {
        let g = groups();
        let targets = [PlantedTarget {
            word: "chef".into(),
            group_counts: vec![2, 5],
            unassociated: 1,
        }];
        let corpus = planted_corpus(&targets, &g, 2).unwrap().segment();
        let contexts = extract_contexts(&corpus, &TargetConcept::single("chef").unwrap(), 3).unwrap();
        let ann = noisy_annotations(&contexts, &g, &["a"], 0.0, 0);
        let s = crate::text::soa_text_human(&contexts, &ann, &g).unwrap();
        assert_eq!(s.values(), &[2.0, 5.0]);
        let noisy = noisy_annotations(&contexts, &g, &["a"], 1.0, 0);
        for (a, c) in noisy.iter().zip(&contexts) {
            assert_ne!(a.label, auto_associate(&c.tokens, &g));
        }
    }

    #[test]
    fn clusters_have_exact_counts_and_separation() {
        let set = planted_clusters("w", &["a", "b"], &[60, 40], 4, 10.0, 3).unwrap();
        assert_eq!(
            set.records().iter().filter(|r| r.label.as_deref() == Some("a")).count(),
            60
        );
        assert_eq!(set.len(), 100);
        assert!(planted_clusters("w", &["a", "b", "c"], &[1, 1, 1], 2, 1.0, 0).is_err());
    }
}
