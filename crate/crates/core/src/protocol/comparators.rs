//! Prior-work measures reproduced for comparison.

use crate::embeddings::{raw_cosine_soa, EmbeddingTable};
use crate::error::{Error, Result};
use crate::lexicon::{GroupSet, TargetConcept};

/// Difference of raw cosines, `cos(T, G₁) − cos(T, G₂)`.
pub fn weat_style_score(target: &TargetConcept, groups: &GroupSet, table: &EmbeddingTable) -> Result<f64> {
    if groups.k() != 2 {
        return Err(Error::Precondition(format!(
            "difference score needs exactly 2 groups, got {}",
            groups.k()
        )));
    }
    let g = groups.groups();
    Ok(raw_cosine_soa(target, &g[0].words, table)? - raw_cosine_soa(target, &g[1].words, table)?)
}

/// Sum of raw cosines over all groups. Blind to which group the target
/// leans toward; kept only to reproduce that failure.
pub fn sum_of_cosines_score(target: &TargetConcept, groups: &GroupSet, table: &EmbeddingTable) -> Result<f64> {
    groups
        .groups()
        .iter()
        .map(|g| raw_cosine_soa(target, &g.words, table))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{Group, WordList};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn groups() -> GroupSet {
        GroupSet::new(vec![
            Group {
                name: "g1".into(),
                words: WordList::new(["a"]).unwrap(),
            },
            Group {
                name: "g2".into(),
                words: WordList::new(["b"]).unwrap(),
            },
        ])
        .unwrap()
    }

    fn table(t: &[f64], a: &[f64], b: &[f64]) -> EmbeddingTable {
        EmbeddingTable::from_pairs(t.len(), [("t", t.to_vec()), ("a", a.to_vec()), ("b", b.to_vec())]).unwrap()
    }

    fn target() -> TargetConcept {
        TargetConcept::single("t").unwrap()
    }

    #[test]
    fn weat_examples() {
        assert_eq!(
            weat_style_score(&target(), &groups(), &table(&[0.3, 2.0], &[1.0, 1.0], &[1.0, 1.0])).unwrap(),
            0.0
        );
        assert_eq!(
            weat_style_score(&target(), &groups(), &table(&[1.0, 0.0], &[2.0, 0.0], &[0.0, 3.0])).unwrap(),
            1.0
        );
    }

    #[test]
    fn weat_matches_arithmetic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let v = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..5).map(|_| rng.random_range(-1.0..1.0)).collect() };
            let (t, a, b) = (v(&mut rng), v(&mut rng), v(&mut rng));
            let cos = |x: &[f64], y: &[f64]| {
                let d: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
                let nx: f64 = x.iter().map(|p| p * p).sum::<f64>().sqrt();
                let ny: f64 = y.iter().map(|p| p * p).sum::<f64>().sqrt();
                d / nx / ny
            };
            let got = weat_style_score(&target(), &groups(), &table(&t, &a, &b)).unwrap();
            assert!((got - (cos(&t, &a) - cos(&t, &b))).abs() < 1e-12);
        }
    }

    #[test]
    fn sum_of_cosines_examples() {
        let s = |t: &[f64], a: &[f64], b: &[f64]| sum_of_cosines_score(&target(), &groups(), &table(t, a, b)).unwrap();
        // antipodal group means: the sum cancels wherever T sits on the axis
        assert_eq!(s(&[1.0, 0.0], &[1.0, 0.0], &[-1.0, 0.0]), 0.0);
        assert_eq!(s(&[-2.0, 0.0], &[1.0, 0.0], &[-1.0, 0.0]), 0.0);
        assert_eq!(s(&[0.0, 1.0], &[1.0, 0.0], &[-1.0, 0.0]), 0.0);
        assert_eq!(s(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]), 2.0);
    }
}
