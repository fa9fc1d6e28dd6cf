//! Associations from contextualized word vectors.
//!
//! Two routes are provided. [`reduce_to_static`] averages each word's
//! vectors over its contexts and hands the result to the static-embedding
//! machinery. The probing route trains a linear classifier ([`ProbeModel`])
//! that predicts, from a target word's vector in context, which group (if
//! any) the target is associated with; the association strength with a
//! group is the number of held-out records predicted as that group.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::framework::AssociationVector;
use crate::lexicon::{GroupSet, TargetConcept};

/// Class name the probe uses for "associated with no group".
pub const NONE_CLASS: &str = "none";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualRecord {
    pub word: String,
    pub context_id: String,
    pub vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContextualVectorSet {
    dim: usize,
    records: Vec<ContextualRecord>,
}

impl ContextualVectorSet {
    pub fn new(records: Vec<ContextualRecord>) -> Result<Self> {
        let dim = records
            .first()
            .map(|r| r.vector.len())
            .ok_or_else(|| Error::EmptyList("contextual vector set has no records".into()))?;
        if dim == 0 {
            return Err(Error::Precondition("vectors must have at least one component".into()));
        }
        let mut seen = HashSet::new();
        for r in &records {
            if r.vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.vector.len(),
                });
            }
            if r.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("vector for ({}, {})", r.word, r.context_id)));
            }
            if !seen.insert((r.word.as_str(), r.context_id.as_str())) {
                return Err(Error::parse_msg(format!(
                    "duplicate record for word {:?} in context {:?}",
                    r.word, r.context_id
                )));
            }
        }
        Ok(ContextualVectorSet { dim, records })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[ContextualRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records whose word belongs to the target's word list.
    pub fn for_target(&self, target: &TargetConcept) -> Vec<&ContextualRecord> {
        self.records
            .iter()
            .filter(|r| target.words.contains(&r.word.to_lowercase()))
            .collect()
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut records = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ContextualRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(n + 1, e.to_string()))?;
            records.push(record);
        }
        Self::new(records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(BufReader::new(fs::File::open(path)?))
    }

    pub fn write<W: Write>(&self, mut writer: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut writer, r)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Averages each word's vectors over all of its contexts. Words appear in
/// the table in order of first occurrence.
pub fn reduce_to_static(set: &ContextualVectorSet) -> Result<EmbeddingTable> {
    let mut order: Vec<String> = Vec::new();
    let mut sums: HashMap<String, (Vec<f64>, usize)> = HashMap::new();
    for r in &set.records {
        let word = r.word.to_lowercase();
        let entry = sums.entry(word.clone()).or_insert_with(|| {
            order.push(word);
            (vec![0.0; set.dim], 0)
        });
        for (s, v) in entry.0.iter_mut().zip(&r.vector) {
            *s += v;
        }
        entry.1 += 1;
    }
    let mut table = EmbeddingTable::new(set.dim);
    for word in order {
        let (sum, count) = &sums[&word];
        let n = *count as f64;
        table.insert(&word, sum.iter().map(|s| s / n).collect())?;
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub final_loss: f64,
    pub regularization: f64,
    pub final_step: f64,
    pub gradient_inf_norm: f64,
    pub converged: bool,
}

/// Linear classifier over `k` groups plus [`NONE_CLASS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub classes: Vec<String>,
    /// One row of `dim` weights per class.
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub training_meta: TrainingMeta,
}

impl ProbeModel {
    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.intercepts)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// Index of the highest-scoring class; ties go to the lower index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let scores = self.scores(x);
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = c;
            }
        }
        best
    }

    /// Checks that the class list is exactly the groups followed by `none`.
    pub fn check_classes(&self, groups: &GroupSet) -> Result<()> {
        let mut expected = groups.names();
        expected.push(NONE_CLASS.to_string());
        if self.classes != expected {
            return Err(Error::Precondition(format!(
                "probe classes {:?} do not match groups {:?}",
                self.classes, expected
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: ProbeModel = serde_json::from_str(&fs::read_to_string(path)?)?;
        let dim = model.dim();
        if model.classes.len() < 2
            || model.weights.len() != model.classes.len()
            || model.intercepts.len() != model.classes.len()
            || model.weights.iter().any(|row| row.len() != dim)
        {
            return Err(Error::parse_msg("probe model has inconsistent shapes"));
        }
        Ok(model)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub regularization: f64,
    pub max_epochs: usize,
    pub tolerance: f64,
    pub initial_step: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            regularization: 1e-4,
            max_epochs: 5000,
            tolerance: 1e-6,
            initial_step: 1.0,
        }
    }
}

/// Regularized multinomial cross-entropy over a fixed design.
///
/// Parameters are laid out as `classes × dim` weights (row-major) followed
/// by `classes` intercepts. Intercepts are not regularized.
pub struct ProbeObjective<'a> {
    features: Vec<&'a [f64]>,
    labels: Vec<usize>,
    classes: usize,
    dim: usize,
    regularization: f64,
}

impl<'a> ProbeObjective<'a> {
    pub fn new(features: Vec<&'a [f64]>, labels: Vec<usize>, classes: usize, regularization: f64) -> Self {
        let dim = features.first().map_or(0, |f| f.len());
        ProbeObjective {
            features,
            labels,
            classes,
            dim,
            regularization,
        }
    }

    pub fn n_params(&self) -> usize {
        self.classes * (self.dim + 1)
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        self.evaluate(params, false).0
    }

    pub fn loss_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        self.evaluate(params, true)
    }

    fn evaluate(&self, params: &[f64], with_gradient: bool) -> (f64, Vec<f64>) {
        let (c, d) = (self.classes, self.dim);
        let (weights, intercepts) = params.split_at(c * d);
        let mut grad = if with_gradient {
            vec![0.0; params.len()]
        } else {
            Vec::new()
        };
        let mut data_loss = 0.0;
        let mut scores = vec![0.0; c];
        for (x, &y) in self.features.iter().zip(&self.labels) {
            for (k, score) in scores.iter_mut().enumerate() {
                let row = &weights[k * d..(k + 1) * d];
                *score = row.iter().zip(x.iter()).map(|(w, v)| w * v).sum::<f64>() + intercepts[k];
            }
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = scores.iter().map(|s| (s - max).exp()).sum();
            let log_norm = max + sum_exp.ln();
            data_loss += log_norm - scores[y];
            if with_gradient {
                for k in 0..c {
                    let p = (scores[k] - log_norm).exp();
                    let residual = p - if k == y { 1.0 } else { 0.0 };
                    for (g, v) in grad[k * d..(k + 1) * d].iter_mut().zip(x.iter()) {
                        *g += residual * v;
                    }
                    grad[c * d + k] += residual;
                }
            }
        }
        let n = self.features.len() as f64;
        let penalty: f64 = weights.iter().map(|w| w * w).sum::<f64>() * 0.5 * self.regularization;
        if with_gradient {
            for g in grad.iter_mut() {
                *g /= n;
            }
            for (g, w) in grad[..c * d].iter_mut().zip(weights) {
                *g += self.regularization * w;
            }
        }
        (data_loss / n + penalty, grad)
    }
}

/// A trained probe and the loss after every accepted step (entry 0 is the
/// loss at the all-zero start).
#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub model: ProbeModel,
    pub losses: Vec<f64>,
}

pub fn train_probe(train: &ContextualVectorSet, groups: &GroupSet, config: &TrainConfig) -> Result<ProbeModel> {
    Ok(train_probe_traced(train, groups, config)?.model)
}

/// Full-batch gradient descent from all-zero parameters. A step that would
/// increase the loss is retried with half the step size; stops once the
/// gradient's infinity norm drops below the tolerance or after
/// `max_epochs` accepted steps.
pub fn train_probe_traced(train: &ContextualVectorSet, groups: &GroupSet, config: &TrainConfig) -> Result<TrainTrace> {
    if config.regularization < 0.0 || !config.regularization.is_finite() {
        return Err(Error::Precondition(
            "regularization must be finite and non-negative".into(),
        ));
    }
    let mut classes = groups.names();
    classes.push(NONE_CLASS.to_string());
    let mut labels = Vec::with_capacity(train.len());
    for r in train.records() {
        let label = r
            .label
            .as_deref()
            .ok_or_else(|| Error::Precondition(format!("record ({}, {}) has no gold label", r.word, r.context_id)))?;
        let idx = classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::Precondition(format!("unknown label {label:?}")))?;
        labels.push(idx);
    }
    let distinct: HashSet<usize> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::DegenerateLabels(distinct.len()));
    }

    let features: Vec<&[f64]> = train.records().iter().map(|r| r.vector.as_slice()).collect();
    let objective = ProbeObjective::new(features, labels, classes.len(), config.regularization);
    let mut params = vec![0.0; objective.n_params()];
    let (mut loss, mut grad) = objective.loss_and_gradient(&params);
    let mut losses = vec![loss];
    let mut step = config.initial_step;
    let mut epochs = 0;
    let mut converged = false;
    let inf_norm = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    while epochs < config.max_epochs {
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss {loss}")));
        }
        if inf_norm(&grad) < config.tolerance {
            converged = true;
            break;
        }
        let mut accepted = false;
        while step > f64::MIN_POSITIVE {
            let candidate: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - step * g).collect();
            let (cand_loss, cand_grad) = objective.loss_and_gradient(&candidate);
            if cand_loss.is_finite() && cand_loss <= loss {
                params = candidate;
                loss = cand_loss;
                grad = cand_grad;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no descent possible at machine precision
            converged = true;
            break;
        }
        losses.push(loss);
        epochs += 1;
    }
    if !converged && inf_norm(&grad) < config.tolerance {
        converged = true;
    }

    let (c, d) = (classes.len(), train.dim());
    let weights = params[..c * d].chunks(d).map(<[f64]>::to_vec).collect();
    let intercepts = params[c * d..].to_vec();
    Ok(TrainTrace {
        model: ProbeModel {
            classes,
            weights,
            intercepts,
            training_meta: TrainingMeta {
                epochs,
                final_loss: loss,
                regularization: config.regularization,
                final_step: step,
                gradient_inf_norm: inf_norm(&grad),
                converged,
            },
        },
        losses,
    })
}

/// Per-group count of records whose predicted class is that group.
pub fn soa_cr_probe<'a, I>(records: I, probe: &ProbeModel, groups: &GroupSet) -> Result<AssociationVector>
where
    I: IntoIterator<Item = &'a ContextualRecord>,
{
    probe.check_classes(groups)?;
    let mut counts = vec![0u64; groups.k()];
    for r in records {
        if r.vector.len() != probe.dim() {
            return Err(Error::DimensionMismatch {
                expected: probe.dim(),
                found: r.vector.len(),
            });
        }
        let class = probe.predict(&r.vector);
        if class < groups.k() {
            counts[class] += 1;
        }
    }
    AssociationVector::from_counts(&counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{Group, WordList};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution as _, Normal};

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

    fn record(word: &str, ctx: usize, vector: Vec<f64>, label: Option<&str>) -> ContextualRecord {
        ContextualRecord {
            word: word.into(),
            context_id: format!("c:{ctx}"),
            vector,
            label: label.map(str::to_string),
        }
    }

    #[test]
    fn set_validation() {
        assert!(ContextualVectorSet::new(vec![]).is_err());
        let mismatch = vec![record("a", 0, vec![1.0, 2.0], None), record("a", 1, vec![1.0], None)];
        assert!(matches!(
            ContextualVectorSet::new(mismatch),
            Err(Error::DimensionMismatch { .. })
        ));
        let dup = vec![record("a", 0, vec![1.0], None), record("a", 0, vec![2.0], None)];
        assert!(ContextualVectorSet::new(dup).is_err());
        let nan = vec![record("a", 0, vec![f64::NAN], None)];
        assert!(ContextualVectorSet::new(nan).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let set = ContextualVectorSet::new(vec![
            record("nurse", 0, vec![0.25, -1.5], Some("female")),
            record("nurse", 1, vec![1.0, 2.0], None),
        ])
        .unwrap();
        let mut buf = Vec::new();
        set.write(&mut buf).unwrap();
        assert_eq!(ContextualVectorSet::read(buf.as_slice()).unwrap(), set);
    }

    #[test]
    fn reduction_examples() {
        let same = ContextualVectorSet::new((0..5).map(|i| record("w", i, vec![0.5, -2.0], None)).collect()).unwrap();
        assert_eq!(reduce_to_static(&same).unwrap().get("w"), Some(&[0.5, -2.0][..]));
        let mid = ContextualVectorSet::new(vec![
            record("w", 0, vec![0.0, 2.0], None),
            record("w", 1, vec![2.0, 0.0], None),
        ])
        .unwrap();
        assert_eq!(reduce_to_static(&mid).unwrap().get("w"), Some(&[1.0, 1.0][..]));
    }

    #[test]
    fn reduction_matches_grouped_mean_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let records: Vec<_> = (0..300)
            .map(|i| {
                let w = format!("w{}", rng.random_range(0..17));
                record(&w, i, (0..6).map(|_| rng.random_range(-4.0..4.0)).collect(), None)
            })
            .collect();
        let set = ContextualVectorSet::new(records.clone()).unwrap();
        let table = reduce_to_static(&set).unwrap();
        for word in table.words() {
            let rows: Vec<&ContextualRecord> = records.iter().filter(|r| &r.word == word).collect();
            for dim in 0..6 {
                // pairwise summation as an independent accumulation order
                fn pairwise(xs: &[f64]) -> f64 {
                    if xs.len() <= 2 {
                        xs.iter().sum()
                    } else {
                        let (a, b) = xs.split_at(xs.len() / 2);
                        pairwise(a) + pairwise(b)
                    }
                }
                let xs: Vec<f64> = rows.iter().map(|r| r.vector[dim]).collect();
                let oracle = pairwise(&xs) / xs.len() as f64;
                assert!((table.get(word).unwrap()[dim] - oracle).abs() < 1e-12);
            }
        }
    }

    fn clusters(n: usize, dim: usize, separation: f64, seed: u64) -> ContextualVectorSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let records = (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { "female" } else { "male" };
                let sign = if i % 2 == 0 { 0.5 } else { -0.5 };
                let v: Vec<f64> = (0..dim)
                    .map(|d| normal.sample(&mut rng) + if d == 0 { sign * separation } else { 0.0 })
                    .collect();
                record("nurse", i, v, Some(label))
            })
            .collect();
        ContextualVectorSet::new(records).unwrap()
    }

    #[test]
    fn training_is_deterministic_and_monotone() {
        let set = clusters(60, 4, 4.0, 9);
        let config = TrainConfig {
            max_epochs: 300,
            ..TrainConfig::default()
        };
        let a = train_probe_traced(&set, &groups(), &config).unwrap();
        let b = train_probe(&set, &groups(), &config).unwrap();
        assert_eq!(a.model.to_json_string().unwrap(), b.to_json_string().unwrap());
        assert!(a.losses.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(a.model.classes, vec!["female", "male", "none"]);
    }

    #[test]
    fn single_class_is_degenerate() {
        let set = ContextualVectorSet::new(vec![
            record("a", 0, vec![1.0], Some("female")),
            record("a", 1, vec![2.0], Some("female")),
        ])
        .unwrap();
        assert!(matches!(
            train_probe(&set, &groups(), &TrainConfig::default()),
            Err(Error::DegenerateLabels(1))
        ));
        let unlabeled = ContextualVectorSet::new(vec![record("a", 0, vec![1.0], None)]).unwrap();
        assert!(train_probe(&unlabeled, &groups(), &TrainConfig::default()).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let d = rng.random_range(1..=8);
            let n = rng.random_range(2..=32);
            let c = 3;
            let xs: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let ys: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
            let objective = ProbeObjective::new(xs.iter().map(Vec::as_slice).collect(), ys, c, 0.05);
            let params: Vec<f64> = (0..objective.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (_, grad) = objective.loss_and_gradient(&params);
            let h = 1e-5;
            for i in 0..params.len() {
                let mut up = params.clone();
                let mut down = params.clone();
                up[i] += h;
                down[i] -= h;
                let numeric = (objective.loss(&up) - objective.loss(&down)) / (2.0 * h);
                let err = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-8);
                assert!(err < 1e-5, "param {i}: analytic {} numeric {numeric}", grad[i]);
            }
        }
    }

    #[test]
    fn argmax_invariant_to_shared_row_shift() {
        let set = clusters(40, 3, 4.0, 1);
        let model = train_probe(
            &set,
            &groups(),
            &TrainConfig {
                max_epochs: 100,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let mut shifted = model.clone();
        for row in shifted.weights.iter_mut() {
            for (w, s) in row.iter_mut().zip([3.0, -1.0, 0.5]) {
                *w += s;
            }
        }
        for r in set.records() {
            assert_eq!(model.predict(&r.vector), shifted.predict(&r.vector));
        }
    }

    #[test]
    fn probe_inference_counts() {
        let g = groups();
        let always_none = ProbeModel {
            classes: vec!["female".into(), "male".into(), "none".into()],
            weights: vec![vec![0.0; 2]; 3],
            intercepts: vec![0.0, 0.0, 1.0],
            training_meta: TrainingMeta {
                epochs: 0,
                final_loss: 0.0,
                regularization: 0.0,
                final_step: 1.0,
                gradient_inf_norm: 0.0,
                converged: true,
            },
        };
        let test = ContextualVectorSet::new((0..10).map(|i| record("t", i, vec![1.0, -1.0], None)).collect()).unwrap();
        assert!(soa_cr_probe(test.records(), &always_none, &g).unwrap().is_zero());

        let wrong_dim = ContextualVectorSet::new(vec![record("t", 0, vec![1.0], None)]).unwrap();
        assert!(matches!(
            soa_cr_probe(wrong_dim.records(), &always_none, &g),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));

        let mut reversed: Vec<ContextualRecord> = test.records().to_vec();
        reversed.reverse();
        assert_eq!(
            soa_cr_probe(test.records(), &always_none, &g).unwrap(),
            soa_cr_probe(&reversed, &always_none, &g).unwrap()
        );
    }
}
