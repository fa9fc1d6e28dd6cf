//! Regenerates the bundled fixtures under `data/fixtures` (or the directory
//! given as the first argument). Output is deterministic.
//!
//! cargo run -p divdist-core --example make_fixtures

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use divdist::contextual::ContextualVectorSet;
use divdist::embeddings::EmbeddingTable;
use divdist::lexicon::{Lexicon, TargetConcept};
use divdist::synth::{noisy_annotations, planted_clusters, planted_corpus, PlantedTarget};
use divdist::text::{extract_contexts, write_annotation, Corpus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// (profession, female mentions, male mentions)
const PROFESSIONS: [(&str, usize, usize); 10] = [
    ("nurse", 14, 2),
    ("secretary", 12, 3),
    ("librarian", 9, 5),
    ("receptionist", 11, 2),
    ("teacher", 8, 6),
    ("engineer", 3, 9),
    ("carpenter", 2, 12),
    ("mechanic", 1, 13),
    ("plumber", 3, 10),
    ("firefighter", 4, 11),
];
const UNASSOCIATED: usize = 2;
const DIM: usize = 8;
const ANNOTATORS: [&str; 3] = ["ann1", "ann2", "ann3"];

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

fn write_corpus(path: &Path, corpus: &Corpus) -> divdist::Result<()> {
    let mut out = fs::File::create(path)?;
    for doc in &corpus.documents {
        serde_json::to_writer(&mut out, doc)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn planted(amplify: bool) -> Vec<PlantedTarget> {
    PROFESSIONS
        .iter()
        .map(|&(word, f, m)| {
            let (f, m) = match (amplify, f >= m) {
                (false, _) => (f, m),
                (true, true) => (2 * f, m),
                (true, false) => (f, 2 * m),
            };
            PlantedTarget {
                word: word.into(),
                group_counts: vec![f, m],
                unassociated: UNASSOCIATED,
            }
        })
        .collect()
}

fn main() -> divdist::Result<()> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| divdist::data_dir().join("fixtures"));
    fs::create_dir_all(&out)?;

    let base = Lexicon::load(divdist::data_dir().join("lexicons/gender.json"))?;
    let targets = PROFESSIONS
        .iter()
        .map(|(w, _, _)| TargetConcept::single(w))
        .collect::<divdist::Result<Vec<_>>>()?;
    let lexicon = Lexicon {
        groups: base.groups.clone(),
        targets: targets.clone(),
    };
    lexicon.save(out.join("lexicon.json"))?;
    let groups = &lexicon.groups;

    let corpus = planted_corpus(&planted(false), groups, 11)?;
    write_corpus(&out.join("corpus.jsonl"), &corpus)?;
    write_corpus(
        &out.join("corpus_amplified.jsonl"),
        &planted_corpus(&planted(true), groups, 12)?,
    )?;

    // annotations for context lengths 1 and 3
    let segmented = corpus.segment();
    for (m, seed) in [(1usize, 21u64), (3, 23)] {
        let mut file = fs::File::create(out.join(format!("annotations_m{m}.jsonl")))?;
        for (i, target) in targets.iter().enumerate() {
            let contexts = extract_contexts(&segmented, target, m)?;
            for record in noisy_annotations(&contexts, groups, &ANNOTATORS, 0.05, seed + i as u64) {
                write_annotation(&mut file, &record, groups)?;
            }
        }
    }

    // static embeddings: dimension 0 carries the gender axis
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut table = EmbeddingTable::new(DIM);
    let mut add = |rng: &mut ChaCha8Rng, word: &str, axis: f64| -> divdist::Result<()> {
        let mut v: Vec<f64> = (0..DIM).map(|_| round4(rng.random_range(-0.3..0.3))).collect();
        v[0] = round4(axis);
        v[1] += 1.0;
        table.insert(word, v)?;
        Ok(())
    };
    for (j, group) in groups.groups().iter().enumerate() {
        let sign = if j == 0 { 1.0 } else { -1.0 };
        for word in group.words.iter() {
            let axis = sign * rng.random_range(0.8..1.2);
            add(&mut rng, word, axis)?;
        }
    }
    for &(word, f, m) in &PROFESSIONS {
        add(&mut rng, word, (f as f64 - m as f64) / (f + m) as f64)?;
    }
    for word in ["table", "river", "music", "window"] {
        add(&mut rng, word, 0.0)?;
    }
    table.save(out.join("embeddings.txt"))?;

    // contextual vectors: gold-labeled probe training set, and per-profession
    // inference sets split like the corpus counts
    let classes = ["female", "male", "none"];
    let round = |set: ContextualVectorSet| -> divdist::Result<ContextualVectorSet> {
        let mut records = set.records().to_vec();
        for r in &mut records {
            r.vector.iter_mut().for_each(|v| *v = round4(*v));
        }
        ContextualVectorSet::new(records)
    };
    let train = round(planted_clusters("probe", &classes, &[60, 60, 60], DIM, 10.0, 41)?)?;
    train.write(fs::File::create(out.join("probe_train.jsonl"))?)?;
    let mut records = Vec::new();
    for (i, &(word, f, m)) in PROFESSIONS.iter().enumerate() {
        let set = planted_clusters(word, &classes, &[f, m, UNASSOCIATED], DIM, 10.0, 50 + i as u64)?;
        records.extend(set.records().iter().cloned().map(|mut r| {
            r.context_id = format!("{word}-{}", r.context_id);
            r.label = None;
            r
        }));
    }
    round(ContextualVectorSet::new(records)?)?.write(fs::File::create(out.join("vectors.jsonl"))?)?;

    // synthetic census shares, loosely tracking the corpus lean
    let mut census = String::from("profession,decade,group,share\n");
    for decade in [1990, 2000, 2010] {
        for &(word, f, m) in &PROFESSIONS {
            let drift = (decade - 2000) as f64 / 1000.0;
            let share = round4((f as f64 / (f + m) as f64 + drift).clamp(0.01, 0.99));
            census.push_str(&format!("{word},{decade},female,{share}\n"));
            census.push_str(&format!("{word},{decade},male,{}\n", round4(1.0 - share)));
        }
    }
    fs::write(out.join("census.csv"), census)?;
    println!("fixtures written to {}", out.display());
    Ok(())
}
