//! Stability of measurements under word-list and configuration changes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::embeddings::CosineTransform;
use crate::error::{Error, Result};
use crate::framework::{ordered_sum, Divergence, Normalizer};
use crate::lexicon::{perturb_wordlist, removal_count, GroupSet, TargetConcept};
use crate::report::{num, Report, Table};
use crate::stats::spearman;

use super::{MeasureSettings, MeasurementSource};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityPlan {
    /// Word-list perturbation trials.
    pub trials: usize,
    /// Fraction of each list removed per trial.
    pub fraction: f64,
    pub seed: u64,
    /// Also sweep normalizers, divergences, and cosine transforms.
    pub grid: bool,
}

impl Default for SensitivityPlan {
    fn default() -> Self {
        SensitivityPlan {
            trials: 100,
            fraction: 0.1,
            seed: 0,
            grid: true,
        }
    }
}

impl SensitivityPlan {
    /// Every group list must lose at least one word and keep at least one.
    pub fn validate(&self, groups: &GroupSet) -> Result<()> {
        if self.trials == 0 {
            return Ok(());
        }
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::Precondition(format!(
                "perturbation fraction {} must lie in (0, 1)",
                self.fraction
            )));
        }
        for g in groups.groups() {
            let remove = removal_count(g.words.len(), self.fraction);
            if remove == 0 {
                return Err(Error::Precondition(format!(
                    "fraction {} removes no words from group {:?}",
                    self.fraction, g.name
                )));
            }
            if remove >= g.words.len() {
                return Err(Error::WouldEmpty {
                    remove,
                    len: g.words.len(),
                });
            }
        }
        Ok(())
    }
}

fn perturbable(target: &TargetConcept, fraction: f64) -> bool {
    let remove = removal_count(target.words.len(), fraction);
    remove > 0 && remove < target.words.len()
}

#[derive(Default)]
struct ChangeStats {
    changes: Vec<f64>,
}

impl ChangeStats {
    fn summarize(&self, report: &mut Report, prefix: &str) {
        let n = self.changes.len();
        if n == 0 {
            report.set(&format!("{prefix}mean_abs_change"), Value::Null);
            report.set(&format!("{prefix}std_abs_change"), Value::Null);
            report.set(&format!("{prefix}max_abs_change"), Value::Null);
            return;
        }
        let mean = ordered_sum(&self.changes) / n as f64;
        let squares: Vec<f64> = self.changes.iter().map(|c| (c - mean) * (c - mean)).collect();
        let std = (ordered_sum(&squares) / n as f64).sqrt();
        let max = self.changes.iter().copied().fold(0.0, f64::max);
        report.set(&format!("{prefix}mean_abs_change"), num(mean));
        report.set(&format!("{prefix}std_abs_change"), num(std));
        report.set(&format!("{prefix}max_abs_change"), num(max));
    }
}

/// Rank correlation of `values` against `base` over targets both have;
/// `None` when it is undefined (fewer than 2 targets or a constant side).
fn rank_agreement(base: &[Option<f64>], values: &[Option<f64>]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = base
        .iter()
        .zip(values)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .unzip();
    spearman(&xs, &ys).ok()
}

/// Perturbation trials plus an optional grid over the configuration.
///
/// Trial `t` seeds its own generator from `seed + t` and draws one seed per
/// group list, then one per perturbable target list in name order. Targets
/// whose list has a single word keep it. Failed evaluations (for instance a
/// perturbed list leaving no labeled context) are counted per reason rather
/// than aborting the run.
pub fn sensitivity(
    source: &MeasurementSource,
    targets: &[TargetConcept],
    settings: &MeasureSettings,
    plan: &SensitivityPlan,
) -> Result<Report> {
    plan.validate(settings.groups)?;
    let mut sorted: Vec<&TargetConcept> = targets.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));

    let mut report = Report::new("protocol/sensitivity");
    report.seed = plan.seed;
    let mut base_table = Table::new("base", &["target", "value"]);
    let mut base = Vec::new();
    for target in &sorted {
        match settings.value(source, target) {
            Ok(v) => {
                base_table.push(vec![json!(target.name), num(v)]);
                base.push(Some(v));
            }
            Err(e) => {
                report.error(&target.name, e);
                base.push(None);
            }
        }
    }
    if base.iter().all(Option::is_none) {
        return Err(Error::Precondition("base measurement failed for every target".into()));
    }

    let mut trial_table = Table::new(
        "trials",
        &[
            "trial",
            "failed",
            "mean_abs_change",
            "max_abs_change",
            "rank_correlation",
        ],
    );
    let mut overall = ChangeStats::default();
    let mut failures: std::collections::BTreeMap<String, usize> = Default::default();
    let mut rank_values = Vec::new();
    for t in 0..plan.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed.wrapping_add(t as u64));
        let mut groups = settings.groups.clone();
        for j in 0..groups.k() {
            let list = perturb_wordlist(&groups.groups()[j].words, plan.fraction, rng.random())?;
            groups = groups.with_list(j, list)?;
        }
        let trial_settings = MeasureSettings {
            groups: &groups,
            ..settings.clone()
        };
        let mut values = Vec::with_capacity(sorted.len());
        let mut trial = ChangeStats::default();
        let mut failed = 0usize;
        for (i, target) in sorted.iter().enumerate() {
            let perturbed;
            let target = if perturbable(target, plan.fraction) {
                let words = perturb_wordlist(&target.words, plan.fraction, rng.random())?;
                perturbed = TargetConcept::new(target.name.clone(), words);
                &perturbed
            } else {
                *target
            };
            match trial_settings.value(source, target) {
                Ok(v) => {
                    if let Some(b) = base[i] {
                        trial.changes.push((v - b).abs());
                    }
                    values.push(Some(v));
                }
                Err(e) => {
                    failed += 1;
                    *failures.entry(failure_kind(&e)).or_default() += 1;
                    values.push(None);
                }
            }
        }
        let rho = rank_agreement(&base, &values);
        if let Some(r) = rho {
            rank_values.push(r);
        }
        let mean = if trial.changes.is_empty() {
            Value::Null
        } else {
            num(ordered_sum(&trial.changes) / trial.changes.len() as f64)
        };
        let max = trial
            .changes
            .iter()
            .copied()
            .fold(None, |m: Option<f64>, c| Some(m.map_or(c, |m| m.max(c))));
        trial_table.push(vec![
            json!(t),
            json!(failed),
            mean,
            max.map_or(Value::Null, num),
            rho.map_or(Value::Null, num),
        ]);
        overall.changes.extend(trial.changes);
    }
    overall.summarize(&mut report, "wordlist_");
    report.set(
        "wordlist_mean_rank_correlation",
        if rank_values.is_empty() {
            Value::Null
        } else {
            num(ordered_sum(&rank_values) / rank_values.len() as f64)
        },
    );
    report.set("wordlist_failed_evaluations", json!(failures));
    report.tables.push(base_table);
    report.tables.push(trial_table);

    if plan.grid {
        let transforms: Vec<Option<CosineTransform>> = match source {
            MeasurementSource::Embeddings { .. } => CosineTransform::ALL.iter().copied().map(Some).collect(),
            _ => vec![None],
        };
        let mut grid = Table::new(
            "grid",
            &[
                "normalizer",
                "divergence",
                "cosine_transform",
                "failed",
                "mean_abs_change",
                "max_abs_change",
                "rank_correlation",
            ],
        );
        let mut all = ChangeStats::default();
        for transform in &transforms {
            let variant = transform.and_then(|tr| source.with_transform(tr));
            let variant = variant.as_ref().unwrap_or(source);
            for normalizer in Normalizer::ALL {
                for divergence in Divergence::ALL {
                    let cell = MeasureSettings {
                        normalizer,
                        divergence,
                        ..settings.clone()
                    };
                    let mut stats = ChangeStats::default();
                    let mut values = Vec::new();
                    let mut failed = 0usize;
                    for (i, target) in sorted.iter().enumerate() {
                        match cell.value(variant, target) {
                            Ok(v) => {
                                if let Some(b) = base[i] {
                                    stats.changes.push((v - b).abs());
                                }
                                values.push(Some(v));
                            }
                            Err(_) => {
                                failed += 1;
                                values.push(None);
                            }
                        }
                    }
                    let mean = if stats.changes.is_empty() {
                        Value::Null
                    } else {
                        num(ordered_sum(&stats.changes) / stats.changes.len() as f64)
                    };
                    let max = stats.changes.iter().copied().fold(0.0, f64::max);
                    grid.push(vec![
                        json!(normalizer.id()),
                        json!(divergence.id()),
                        json!(transform.map(|t| t.id())),
                        json!(failed),
                        mean,
                        num(max),
                        rank_agreement(&base, &values).map_or(Value::Null, num),
                    ]);
                    all.changes.extend(stats.changes);
                }
            }
        }
        all.summarize(&mut report, "grid_");
        report.tables.push(grid);
    }

    report.config = json!({
        "measure": settings.config(),
        "soa_variant": source.soa_variant(),
        "cosine_transform": match source {
            MeasurementSource::Embeddings { transform, .. } => json!(transform.id()),
            _ => Value::Null,
        },
        "trials": plan.trials,
        "fraction": plan.fraction,
        "grid": plan.grid,
    });
    report.set("n_targets", sorted.len());
    Ok(report)
}

fn failure_kind(e: &Error) -> String {
    match e {
        Error::ZeroVector => "zero_vector".into(),
        Error::AllOov(_) => "all_oov".into(),
        Error::ZeroNorm(_) => "zero_norm".into(),
        _ => "other".into(),
    }
}
