//! Projection-based mitigation baseline and its evaluation.
//!
//! A bias direction is estimated from definitional word pairs; `neutralize`
//! removes that direction from a vector and `equalize` makes the two members
//! of a pair mirror images across the hyperplane orthogonal to it. The
//! evaluation contrasts the score this baseline directly drives to zero
//! (the difference of cosines over the pair words) with the framework bias
//! over the full group word lists.

use std::collections::HashSet;
use std::str::FromStr;

use serde_json::{json, Value};

use crate::embeddings::{dot, norm, soa_we_vector, CosineTransform, EmbeddingTable};
use crate::error::{Error, Result};
use crate::framework::{bias_value, Distribution, Divergence, Normalizer};
use crate::lexicon::{Group, GroupSet, TargetConcept, WordList};
use crate::report::{num, Report, Table};

use super::comparators::weat_style_score;

pub const POWER_ITERATION_TOL: f64 = 1e-8;
pub const POWER_ITERATION_MAX: usize = 1000;
/// Largest projection onto the bias direction a neutralized vector may keep.
pub const NEUTRALIZE_TOLERANCE: f64 = 1e-10;

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Leading eigenvector of `Σ dᵢdᵢᵀ` over the pair differences `dᵢ = aᵢ − bᵢ`,
/// by power iteration started from the first difference. The sign is fixed
/// so the first usable pair projects positively. Pairs with an
/// out-of-vocabulary member are skipped.
pub fn bias_direction(pairs: &[(String, String)], table: &EmbeddingTable) -> Result<Vec<f64>> {
    let diffs: Vec<Vec<f64>> = pairs
        .iter()
        .filter_map(|(a, b)| Some(sub(table.get(a)?, table.get(b)?)))
        .collect();
    if diffs.is_empty() {
        return Err(Error::AllOov("definitional pairs".into()));
    }
    let start = diffs
        .iter()
        .find(|d| norm(d) > 0.0)
        .ok_or_else(|| Error::ZeroNorm("every pair difference is zero".into()))?;
    let scale = norm(start);
    let mut v: Vec<f64> = start.iter().map(|x| x / scale).collect();

    let mut converged = false;
    for _ in 0..POWER_ITERATION_MAX {
        let mut w = vec![0.0; v.len()];
        for d in &diffs {
            let p = dot(d, &v);
            for (wi, di) in w.iter_mut().zip(d) {
                *wi += p * di;
            }
        }
        let n = norm(&w);
        if n == 0.0 {
            return Err(Error::ZeroNorm("power iteration collapsed".into()));
        }
        w.iter_mut().for_each(|x| *x /= n);
        let change = norm(&sub(&w, &v));
        v = w;
        if change < POWER_ITERATION_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(POWER_ITERATION_MAX));
    }
    if dot(start, &v) < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(v)
}

fn check_direction(v: &[f64], direction: &[f64]) -> Result<()> {
    if v.len() != direction.len() {
        return Err(Error::DimensionMismatch {
            expected: direction.len(),
            found: v.len(),
        });
    }
    if (norm(direction) - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition("bias direction must have unit norm".into()));
    }
    Ok(())
}

fn remove_component(v: &[f64], direction: &[f64]) -> Vec<f64> {
    let p = dot(v, direction);
    v.iter().zip(direction).map(|(x, g)| x - p * g).collect()
}

/// Removes the component along `direction` (unit norm).
pub fn neutralize(v: &[f64], direction: &[f64]) -> Result<Vec<f64>> {
    check_direction(v, direction)?;
    // second pass mops up rounding left by the first
    let out = remove_component(&remove_component(v, direction), direction);
    if norm(&out) <= 1e-12 * norm(v) || norm(&out) == 0.0 {
        return Err(Error::ZeroResult);
    }
    Ok(out)
}

/// Replaces a pair by `ν ± h·g`, where `ν` is the pair mean with its
/// `g` component removed and `h` is half the pair's separation along `g`.
pub fn equalize(pair: (&[f64], &[f64]), direction: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let (a, b) = pair;
    check_direction(a, direction)?;
    check_direction(b, direction)?;
    let mean: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    let orth = remove_component(&remove_component(&mean, direction), direction);
    let half = 0.5 * dot(&sub(a, b), direction);
    let a2 = orth.iter().zip(direction).map(|(o, g)| o + half * g).collect();
    let b2 = orth.iter().zip(direction).map(|(o, g)| o - half * g).collect();
    Ok((a2, b2))
}

/// Neutralizes every word outside `protected` and the pairs, then equalizes
/// the pairs. Returns the new table and the largest projection left on any
/// neutralized vector.
pub fn hard_debias(
    table: &EmbeddingTable,
    direction: &[f64],
    pairs: &[(String, String)],
    protected: &HashSet<String>,
) -> Result<(EmbeddingTable, f64)> {
    let in_pair: HashSet<&str> = pairs.iter().flat_map(|(a, b)| [a.as_str(), b.as_str()]).collect();
    let mut equalized = std::collections::HashMap::new();
    for (a, b) in pairs {
        if let (Some(va), Some(vb)) = (table.get(a), table.get(b)) {
            let (ea, eb) = equalize((va, vb), direction)?;
            equalized.insert(a.as_str(), ea);
            equalized.insert(b.as_str(), eb);
        }
    }
    let mut max_projection = 0.0f64;
    let out = table.map_vectors(|word, v| {
        if let Some(e) = equalized.get(word) {
            Ok(e.clone())
        } else if protected.contains(word) || in_pair.contains(word) {
            Ok(v.to_vec())
        } else {
            let n = neutralize(v, direction)?;
            max_projection = max_projection.max(dot(&n, direction).abs());
            Ok(n)
        }
    })?;
    Ok((out, max_projection))
}

/// Neutralizes every vector in the table.
pub fn project_out_all(table: &EmbeddingTable, direction: &[f64]) -> Result<(EmbeddingTable, f64)> {
    let mut max_projection = 0.0f64;
    let out = table.map_vectors(|_, v| {
        let n = neutralize(v, direction)?;
        max_projection = max_projection.max(dot(&n, direction).abs());
        Ok(n)
    })?;
    Ok((out, max_projection))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mitigation {
    Identity,
    /// Neutralize non-group words, equalize definitional pairs.
    Hard,
    /// Neutralize every word.
    ProjectionRemoval,
}

impl Mitigation {
    pub fn id(self) -> &'static str {
        match self {
            Mitigation::Identity => "identity",
            Mitigation::Hard => "hard",
            Mitigation::ProjectionRemoval => "projection-removal",
        }
    }
}

impl FromStr for Mitigation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Mitigation::Identity),
            "hard" => Ok(Mitigation::Hard),
            "projection-removal" => Ok(Mitigation::ProjectionRemoval),
            other => Err(Error::parse_msg(format!("unknown mitigation {other:?}"))),
        }
    }
}

/// Pairs the two groups' word lists position by position.
pub fn default_pairs(groups: &GroupSet) -> Result<Vec<(String, String)>> {
    if groups.k() != 2 {
        return Err(Error::Precondition("definitional pairs need exactly 2 groups".into()));
    }
    let (a, b) = (&groups.groups()[0].words, &groups.groups()[1].words);
    if a.len() != b.len() {
        return Err(Error::Precondition(format!(
            "group lists differ in length ({} vs {}); supply definitional pairs explicitly",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x.to_string(), y.to_string()))
        .collect())
}

#[derive(Debug, Clone)]
pub struct MitigationConfig {
    pub mitigation: Mitigation,
    pub pairs: Option<Vec<(String, String)>>,
    pub normalizer: Normalizer,
    pub divergence: Divergence,
    pub transform: CosineTransform,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        MitigationConfig {
            mitigation: Mitigation::Hard,
            pairs: None,
            normalizer: Normalizer::Sum,
            divergence: Divergence::L1,
            transform: CosineTransform::Affine,
        }
    }
}

struct Scores {
    targeted: f64,
    framework: f64,
}

fn scores(
    target: &TargetConcept,
    table: &EmbeddingTable,
    groups: &GroupSet,
    pair_groups: &GroupSet,
    reference: &Distribution,
    config: &MitigationConfig,
) -> Result<Scores> {
    let targeted = weat_style_score(target, pair_groups, table)?;
    let s = soa_we_vector(target, groups, table, config.transform)?.soa;
    let framework = bias_value(&s, reference, config.normalizer, config.divergence)?;
    Ok(Scores { targeted, framework })
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

pub fn mitigation_eval(
    table: &EmbeddingTable,
    targets: &[TargetConcept],
    groups: &GroupSet,
    reference: &Distribution,
    config: &MitigationConfig,
) -> Result<Report> {
    let pairs = match &config.pairs {
        Some(p) => p.clone(),
        None => default_pairs(groups)?,
    };
    if groups.k() != 2 {
        return Err(Error::Precondition(
            "mitigation evaluation needs exactly 2 groups".into(),
        ));
    }
    let pair_groups = GroupSet::new(vec![
        Group {
            name: groups.groups()[0].name.clone(),
            words: WordList::new(pairs.iter().map(|p| p.0.as_str()))?,
        },
        Group {
            name: groups.groups()[1].name.clone(),
            words: WordList::new(pairs.iter().map(|p| p.1.as_str()))?,
        },
    ])?;
    let usable = pairs
        .iter()
        .filter(|(a, b)| table.get(a).is_some() && table.get(b).is_some())
        .count();

    let (after, max_projection) = match config.mitigation {
        Mitigation::Identity => (table.clone(), None),
        Mitigation::Hard => {
            let direction = bias_direction(&pairs, table)?;
            let protected: HashSet<String> = groups
                .groups()
                .iter()
                .flat_map(|g| g.words.iter().map(str::to_string))
                .collect();
            let (t, p) = hard_debias(table, &direction, &pairs, &protected)?;
            (t, Some(p))
        }
        Mitigation::ProjectionRemoval => {
            let direction = bias_direction(&pairs, table)?;
            let (t, p) = project_out_all(table, &direction)?;
            (t, Some(p))
        }
    };
    if let Some(p) = max_projection {
        if p >= NEUTRALIZE_TOLERANCE {
            return Err(Error::Precondition(format!(
                "neutralized vector keeps projection {p:e} on the bias direction"
            )));
        }
    }

    let mut report = Report::new("protocol/mitigation");
    let mut rows = Table::new(
        "targets",
        &[
            "target",
            "targeted_before",
            "targeted_after",
            "targeted_delta",
            "framework_before",
            "framework_after",
            "framework_delta",
            "sign_disagreement",
        ],
    );
    let mut sorted: Vec<&TargetConcept> = targets.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    let (mut n, mut disagreements) = (0usize, 0usize);
    let (mut sum_targeted_delta, mut sum_framework_delta, mut sum_abs_after) = (0.0, 0.0, 0.0);
    for target in sorted {
        let outcome = scores(target, table, groups, &pair_groups, reference, config)
            .and_then(|before| Ok((before, scores(target, &after, groups, &pair_groups, reference, config)?)));
        match outcome {
            Ok((before, post)) => {
                let targeted_delta = post.targeted - before.targeted;
                let framework_delta = post.framework - before.framework;
                let magnitude_change = sign(post.targeted.abs() - before.targeted.abs());
                let framework_change = sign(framework_delta);
                let disagree = magnitude_change * framework_change < 0;
                n += 1;
                disagreements += disagree as usize;
                sum_targeted_delta += targeted_delta;
                sum_framework_delta += framework_delta;
                sum_abs_after += post.targeted.abs();
                rows.push(vec![
                    json!(target.name),
                    num(before.targeted),
                    num(post.targeted),
                    num(targeted_delta),
                    num(before.framework),
                    num(post.framework),
                    num(framework_delta),
                    json!(disagree),
                ]);
            }
            Err(e) => report.error(&target.name, e),
        }
    }
    report.tables.push(rows);
    report.config = json!({
        "mitigation": config.mitigation.id(),
        "pairs": pairs.iter().map(|(a, b)| json!([a, b])).collect::<Vec<_>>(),
        "normalizer": config.normalizer.id(),
        "divergence": config.divergence.id(),
        "cosine_transform": config.transform.id(),
        "groups": groups.names(),
        "reference": reference.probs(),
    });
    report.set("n_targets", n);
    report.set("n_pairs_used", usable);
    report.set("sign_disagreements", disagreements);
    let mean = |s: f64| if n > 0 { num(s / n as f64) } else { Value::Null };
    report.set("mean_targeted_delta", mean(sum_targeted_delta));
    report.set("mean_abs_targeted_after", mean(sum_abs_after));
    report.set("mean_framework_delta", mean(sum_framework_delta));
    report.set("max_neutralized_projection", max_projection.map_or(Value::Null, num));
    Ok(report)
}
