use std::collections::BTreeMap;

use divdist::embeddings::{CosineTransform, EmbeddingTable};
use divdist::framework::{Distribution, Divergence, Normalizer};
use divdist::lexicon::{Group, GroupSet, Lexicon, TargetConcept, WordList};
use divdist::protocol::{
    amplification, convergent_validity, face_validity, predictive_contemporary, signed_binary_bias, CensusSeries,
    ConvergentConfig, MeasureSettings, MeasurementSource, StereotypeSpec,
};
use divdist::synth::{noisy_annotations, planted_corpus, PlantedTarget};
use divdist::text::extract_contexts;
use divdist::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gender() -> GroupSet {
    Lexicon::load(divdist::data_dir().join("lexicons/gender.json"))
        .unwrap()
        .groups
}

fn planted(word: &str, f: usize, m: usize) -> PlantedTarget {
    PlantedTarget {
        word: word.into(),
        group_counts: vec![f, m],
        unassociated: 1,
    }
}

fn settings<'a>(groups: &'a GroupSet, reference: &'a Distribution) -> MeasureSettings<'a> {
    MeasureSettings {
        groups,
        reference,
        normalizer: Normalizer::Sum,
        divergence: Divergence::L1,
    }
}

#[test]
fn face_validity_passes_on_stereotype_consistent_corpus() {
    let groups = gender();
    let spec = StereotypeSpec::load(divdist::data_dir().join("stereotypes.json")).unwrap();
    let targets: Vec<PlantedTarget> = spec
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            if e.group == "female" {
                planted(&e.profession, 8 + i, 3)
            } else {
                planted(&e.profession, 2, 9 + i)
            }
        })
        .collect();
    let corpus = planted_corpus(&targets, &groups, 4).unwrap().segment();
    let source = MeasurementSource::Text {
        corpus,
        context_sentences: 3,
    };
    let uniform = Distribution::uniform(2).unwrap();
    let scores: BTreeMap<String, f64> = spec
        .entries
        .iter()
        .map(|e| {
            let s = source
                .association(&TargetConcept::single(&e.profession).unwrap(), &groups)
                .unwrap();
            (
                e.profession.clone(),
                signed_binary_bias(&s, &uniform, Normalizer::Sum).unwrap(),
            )
        })
        .collect();
    let report = face_validity(&scores, &spec, &groups).unwrap();
    assert_eq!(report.passed, Some(true));
}

#[test]
fn convergent_self_agreement_and_missing_length() {
    let groups = gender();
    let targets: Vec<PlantedTarget> = (0..8)
        .map(|i| planted(&format!("job{i}"), 3 + 3 * i, 25 - 2 * i))
        .collect();
    let corpus = planted_corpus(&targets, &groups, 9).unwrap().segment();
    let concepts: Vec<TargetConcept> = targets
        .iter()
        .map(|t| TargetConcept::single(&t.word).unwrap())
        .collect();
    let mut annotations = BTreeMap::new();
    for m in [1, 3] {
        let mut records = Vec::new();
        for t in &concepts {
            records.extend(noisy_annotations(
                &extract_contexts(&corpus, t, m).unwrap(),
                &groups,
                &["a", "b"],
                0.0,
                1,
            ));
        }
        annotations.insert(m, records);
    }
    let uniform = Distribution::uniform(2).unwrap();
    let config = ConvergentConfig {
        context_lengths: vec![1, 3],
        permutations: 200,
        seed: 5,
    };
    let report = convergent_validity(&corpus, &concepts, &settings(&groups, &uniform), &annotations, &config).unwrap();
    for row in &report.table("correlations").unwrap().rows {
        assert_eq!(row[2].as_f64().unwrap(), 1.0);
    }

    let config = ConvergentConfig {
        context_lengths: vec![1, 3, 5],
        ..config
    };
    assert!(matches!(
        convergent_validity(&corpus, &concepts, &settings(&groups, &uniform), &annotations, &config),
        Err(Error::MissingAnnotations(5))
    ));
}

#[test]
fn amplified_corpus_has_positive_mean_delta() {
    let groups = gender();
    let base: Vec<PlantedTarget> = (0..6).map(|i| planted(&format!("job{i}"), 10 + i, 6)).collect();
    let doubled: Vec<PlantedTarget> = base
        .iter()
        .map(|t| PlantedTarget {
            group_counts: vec![2 * t.group_counts[0], t.group_counts[1]],
            ..t.clone()
        })
        .collect();
    let source = |targets: &[PlantedTarget], seed| MeasurementSource::Text {
        corpus: planted_corpus(targets, &groups, seed).unwrap().segment(),
        context_sentences: 3,
    };
    let sources = vec![
        ("a".to_string(), source(&base, 1)),
        ("b".to_string(), source(&doubled, 2)),
    ];
    let concepts: Vec<TargetConcept> = base.iter().map(|t| TargetConcept::single(&t.word).unwrap()).collect();
    let uniform = Distribution::uniform(2).unwrap();
    let report = amplification(&sources, &concepts, &settings(&groups, &uniform)).unwrap();
    assert!(report.summary["mean_delta:a:b"].as_f64().unwrap() > 0.0);
    for row in &report.table("delta:a:b").unwrap().rows {
        assert!(row[3].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn predictive_monotone_noisy_link() {
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
    let uniform = Distribution::uniform(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut scores = BTreeMap::new();
    let mut csv = String::from("profession,decade,group,share\n");
    for i in 0..20 {
        let score: f64 = rng.random_range(-0.9..0.9);
        scores.insert(format!("p{i}"), score);
        // monotone link plus noise, kept inside (0, 1)
        let share = (1.0 / (1.0 + (-3.0 * score).exp()) + rng.random_range(-0.03..0.03)).clamp(0.01, 0.99);
        csv.push_str(&format!("p{i},2000,female,{share}\np{i},2000,male,{}\n", 1.0 - share));
    }
    let census = CensusSeries::read(csv.as_bytes()).unwrap();
    let report = predictive_contemporary(&scores, &census, 2000, &settings(&groups, &uniform), 1000, 3).unwrap();
    assert!(report.summary["spearman_rho"].as_f64().unwrap() >= 0.8);
}

#[test]
fn embedding_pipeline_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vectors.txt");
    std::fs::write(&path, "3 2\nshe 1 0\nhe 0 1\nnurse 3 1\n").unwrap();
    let table = EmbeddingTable::load(&path, divdist::embeddings::EmbeddingFormat::Auto).unwrap();
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
    let source = MeasurementSource::Embeddings {
        table,
        transform: CosineTransform::Affine,
    };
    let s = source
        .association(&TargetConcept::single("nurse").unwrap(), &groups)
        .unwrap();
    let n = 10f64.sqrt();
    let expected = [(1.0 + 3.0 / n) / 2.0, (1.0 + 1.0 / n) / 2.0];
    for (a, b) in s.values().iter().zip(expected) {
        assert!((a - b).abs() < 1e-12);
    }
}
