//! Face, convergent, and predictive validity.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::framework::{bias_value, AssociationVector, Divergence, Normalizer};
use crate::lexicon::{GroupSet, TargetConcept};
use crate::report::{num, Report, Table};
use crate::stats::{correlate, CorrelationResult};
use crate::text::{extract_contexts, soa_text_auto_contexts, soa_text_human, AnnotationRecord, SegmentedCorpus};

use super::{directional_score, signed_binary_bias, MeasureSettings};

/// Fewest shared items a predictive correlation is computed on.
pub const MIN_OVERLAP: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StereotypeEntry {
    pub profession: String,
    pub group: String,
}

/// Professions with the group their stereotype favors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StereotypeSpec {
    pub entries: Vec<StereotypeEntry>,
}

impl StereotypeSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: StereotypeSpec = serde_json::from_str(text)?;
        let mut seen = HashSet::new();
        for e in &spec.entries {
            if !seen.insert(e.profession.as_str()) {
                return Err(Error::parse_msg(format!("profession {:?} listed twice", e.profession)));
            }
        }
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self, groups: &GroupSet) -> Result<()> {
        for e in &self.entries {
            if groups.index_of(&e.group).is_none() {
                return Err(Error::Precondition(format!(
                    "stereotype for {:?} names unknown group {:?}",
                    e.profession, e.group
                )));
            }
        }
        Ok(())
    }
}

/// Checks that each signed two-group score leans toward the stereotyped
/// group: positive for the first group, negative for the second.
pub fn face_validity(scores: &BTreeMap<String, f64>, spec: &StereotypeSpec, groups: &GroupSet) -> Result<Report> {
    if groups.k() != 2 {
        return Err(Error::Precondition(
            "face validity uses the signed two-group score".into(),
        ));
    }
    spec.validate(groups)?;
    let names = groups.names();
    let mut table = Table::new("professions", &["profession", "expected", "score", "observed", "pass"]);
    let mut exceptions = Vec::new();
    for e in &spec.entries {
        let score = *scores
            .get(&e.profession)
            .ok_or_else(|| Error::MissingMeasurement(e.profession.clone()))?;
        let observed = if score > 0.0 {
            Some(names[0].as_str())
        } else if score < 0.0 {
            Some(names[1].as_str())
        } else {
            None
        };
        let pass = observed == Some(e.group.as_str());
        if !pass {
            exceptions.push(e.profession.clone());
        }
        table.push(vec![
            json!(e.profession),
            json!(e.group),
            num(score),
            json!(observed),
            json!(pass),
        ]);
    }
    let mut report = Report::new("protocol/face");
    report.set("n_professions", spec.entries.len());
    report.set("n_pass", spec.entries.len() - exceptions.len());
    report.passed = Some(exceptions.is_empty());
    report.set("exceptions", exceptions);
    report.tables.push(table);
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct ConvergentConfig {
    pub context_lengths: Vec<usize>,
    pub permutations: usize,
    pub seed: u64,
}

fn correlation_row(m: Value, c: &CorrelationResult) -> Vec<Value> {
    vec![
        m,
        json!(c.n),
        num(c.spearman_rho),
        num(c.pearson_r2),
        num(c.p_spearman),
        num(c.p_pearson),
    ]
}

const CORRELATION_COLUMNS: [&str; 6] = ["key", "n", "spearman_rho", "pearson_r2", "p_spearman", "p_pearson"];

/// Correlates human-labeled and rule-labeled bias per context length.
/// `annotations` maps each context length to the judgments collected for
/// that length; a target's judgments are matched through its context ids.
pub fn convergent_validity(
    corpus: &SegmentedCorpus,
    targets: &[TargetConcept],
    settings: &MeasureSettings,
    annotations: &BTreeMap<usize, Vec<AnnotationRecord>>,
    config: &ConvergentConfig,
) -> Result<Report> {
    if config.context_lengths.is_empty() {
        return Err(Error::Precondition("no context lengths requested".into()));
    }
    for m in &config.context_lengths {
        if !annotations.contains_key(m) {
            return Err(Error::MissingAnnotations(*m));
        }
    }
    let mut sorted: Vec<&TargetConcept> = targets.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    let score =
        |s: &AssociationVector| directional_score(s, settings.reference, settings.normalizer, settings.divergence);

    let mut report = Report::new("protocol/convergent");
    report.seed = config.seed;
    let mut per_target = Table::new("targets", &["context_sentences", "target", "automated", "human"]);
    let mut by_length = Table::new("correlations", &CORRELATION_COLUMNS);
    let mut best: Option<(usize, f64)> = None;
    for &m in &config.context_lengths {
        let judgments = &annotations[&m];
        let (mut auto_scores, mut human_scores) = (Vec::new(), Vec::new());
        for target in &sorted {
            let outcome = extract_contexts(corpus, target, m).and_then(|contexts| {
                let ids: HashSet<&str> = contexts.iter().map(|c| c.context_id.as_str()).collect();
                let own: Vec<AnnotationRecord> = judgments
                    .iter()
                    .filter(|a| ids.contains(a.context_id.as_str()))
                    .cloned()
                    .collect();
                let auto = score(&soa_text_auto_contexts(&contexts, settings.groups)?)?;
                let human = score(&soa_text_human(&contexts, &own, settings.groups)?)?;
                Ok((auto, human))
            });
            match outcome {
                Ok((a, h)) => {
                    per_target.push(vec![json!(m), json!(target.name), num(a), num(h)]);
                    auto_scores.push(a);
                    human_scores.push(h);
                }
                Err(e) => report.error(format!("m={m}/{}", target.name), e),
            }
        }
        match correlate(&human_scores, &auto_scores, config.permutations, config.seed) {
            Ok(c) => {
                if best.is_none_or(|(_, rho)| c.spearman_rho > rho) {
                    best = Some((m, c.spearman_rho));
                }
                by_length.push(correlation_row(json!(m), &c));
            }
            Err(e) => report.error(format!("m={m}"), e),
        }
    }
    report.config = json!({
        "measure": settings.config(),
        "context_lengths": config.context_lengths,
        "permutations": config.permutations,
    });
    report.set("best_context_sentences", best.map(|(m, _)| m));
    report.set("best_spearman_rho", best.map_or(Value::Null, |(_, r)| num(r)));
    report.tables.push(by_length);
    report.tables.push(per_target);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusRow {
    pub profession: String,
    pub decade: i32,
    pub group: String,
    pub share: f64,
}

/// Employment shares per profession, decade, and group.
#[derive(Debug, Clone, PartialEq)]
pub struct CensusSeries {
    rows: Vec<CensusRow>,
}

impl CensusSeries {
    pub fn new(rows: Vec<CensusRow>) -> Result<Self> {
        let mut totals: BTreeMap<(&str, i32), Vec<f64>> = BTreeMap::new();
        let mut seen = HashSet::new();
        for r in &rows {
            if !(0.0..=1.0).contains(&r.share) {
                return Err(Error::InvalidDistribution(format!(
                    "share {} for {} in {} is outside [0, 1]",
                    r.share, r.profession, r.decade
                )));
            }
            if !seen.insert((r.profession.as_str(), r.decade, r.group.as_str())) {
                return Err(Error::parse_msg(format!(
                    "duplicate census row for {} / {} / {}",
                    r.profession, r.decade, r.group
                )));
            }
            totals
                .entry((r.profession.as_str(), r.decade))
                .or_default()
                .push(r.share);
        }
        for ((profession, decade), shares) in totals {
            let sum = crate::framework::ordered_sum(&shares);
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidDistribution(format!(
                    "shares for {profession} in {decade} sum to {sum}"
                )));
            }
        }
        Ok(CensusSeries { rows })
    }

    /// Reads CSV with header `profession,decade,group,share`.
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut csv = csv::Reader::from_reader(reader);
        let header: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
        if header != ["profession", "decade", "group", "share"] {
            return Err(Error::parse(
                1,
                format!(
                    "expected header profession,decade,group,share, got {}",
                    header.join(",")
                ),
            ));
        }
        let rows = csv.deserialize().collect::<std::result::Result<Vec<CensusRow>, _>>()?;
        Self::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::fs::File::open(path)?)
    }

    pub fn rows(&self) -> &[CensusRow] {
        &self.rows
    }

    pub fn decades(&self) -> BTreeSet<i32> {
        self.rows.iter().map(|r| r.decade).collect()
    }

    /// Share vector in group order. `None` when the profession is absent
    /// for that decade; an error when a tracked group is missing.
    pub fn shares(&self, profession: &str, decade: i32, groups: &GroupSet) -> Result<Option<AssociationVector>> {
        let rows: Vec<&CensusRow> = self
            .rows
            .iter()
            .filter(|r| r.profession == profession && r.decade == decade)
            .collect();
        if rows.is_empty() {
            return Ok(None);
        }
        let mut shares = vec![None; groups.k()];
        for r in rows {
            let j = groups
                .index_of(&r.group)
                .ok_or_else(|| Error::Precondition(format!("census names unknown group {:?}", r.group)))?;
            shares[j] = Some(r.share);
        }
        let shares = shares
            .into_iter()
            .zip(groups.names())
            .map(|(s, name)| {
                s.ok_or_else(|| {
                    Error::Precondition(format!("census lacks group {name:?} for {profession} in {decade}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Some(AssociationVector::new(shares)?))
    }

    /// Census-side score: the signed two-group score for two groups, the
    /// ℓ₁ framework value otherwise.
    pub fn score(&self, profession: &str, decade: i32, settings: &MeasureSettings) -> Result<Option<f64>> {
        let Some(s) = self.shares(profession, decade, settings.groups)? else {
            return Ok(None);
        };
        let value = if settings.groups.k() == 2 {
            signed_binary_bias(&s, settings.reference, Normalizer::Sum)?
        } else {
            bias_value(&s, settings.reference, Normalizer::Sum, Divergence::L1)?
        };
        Ok(Some(value))
    }
}

/// Correlates measured per-profession scores with census-side scores for
/// one decade.
pub fn predictive_contemporary(
    scores: &BTreeMap<String, f64>,
    census: &CensusSeries,
    decade: i32,
    settings: &MeasureSettings,
    permutations: usize,
    seed: u64,
) -> Result<Report> {
    let mut table = Table::new("professions", &["profession", "measured", "census"]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (profession, &measured) in scores {
        if let Some(c) = census.score(profession, decade, settings)? {
            table.push(vec![json!(profession), num(measured), num(c)]);
            xs.push(measured);
            ys.push(c);
        }
    }
    if xs.len() < MIN_OVERLAP {
        return Err(Error::InsufficientOverlap {
            found: xs.len(),
            required: MIN_OVERLAP,
        });
    }
    let c = correlate(&xs, &ys, permutations, seed)?;
    let mut report = Report::new("protocol/predictive");
    report.seed = seed;
    report.config = json!({
        "mode": "contemporary",
        "decade": decade,
        "measure": settings.config(),
        "permutations": permutations,
    });
    report.set("n", c.n);
    report.set("spearman_rho", num(c.spearman_rho));
    report.set("pearson_r2", num(c.pearson_r2));
    report.set("p_spearman", num(c.p_spearman));
    report.set("p_pearson", num(c.p_pearson));
    report.tables.push(table);
    Ok(report)
}

/// Averages measured and census-side scores over professions per decade
/// (unweighted) and correlates the two series across decades.
pub fn predictive_diachronic(
    scores_by_decade: &BTreeMap<i32, BTreeMap<String, f64>>,
    census: &CensusSeries,
    settings: &MeasureSettings,
    permutations: usize,
    seed: u64,
) -> Result<Report> {
    let mut table = Table::new("decades", &["decade", "n_professions", "measured_mean", "census_mean"]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (&decade, scores) in scores_by_decade {
        let (mut m, mut c) = (Vec::new(), Vec::new());
        for (profession, &measured) in scores {
            if let Some(value) = census.score(profession, decade, settings)? {
                m.push(measured);
                c.push(value);
            }
        }
        if m.is_empty() {
            continue;
        }
        let mean = |v: &[f64]| crate::framework::ordered_sum(v) / v.len() as f64;
        let (mx, cx) = (mean(&m), mean(&c));
        table.push(vec![json!(decade), json!(m.len()), num(mx), num(cx)]);
        xs.push(mx);
        ys.push(cx);
    }
    if xs.len() < MIN_OVERLAP {
        return Err(Error::InsufficientOverlap {
            found: xs.len(),
            required: MIN_OVERLAP,
        });
    }
    let c = correlate(&xs, &ys, permutations, seed)?;
    let mut report = Report::new("protocol/predictive");
    report.seed = seed;
    report.config = json!({
        "mode": "diachronic",
        "measure": settings.config(),
        "permutations": permutations,
    });
    report.set("n", c.n);
    report.set("spearman_rho", num(c.spearman_rho));
    report.set("pearson_r2", num(c.pearson_r2));
    report.set("p_spearman", num(c.p_spearman));
    report.set("p_pearson", num(c.p_pearson));
    report.tables.push(table);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framework::Distribution;
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

    fn spec() -> StereotypeSpec {
        StereotypeSpec::from_json_str(
            r#"[{"profession":"nurse","group":"female"},{"profession":"mechanic","group":"male"},
                {"profession":"librarian","group":"female"}]"#,
        )
        .unwrap()
    }

    fn scores(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn face_all_pass_and_single_exception() {
        let g = groups();
        let r = face_validity(
            &scores(&[("nurse", 0.4), ("mechanic", -0.6), ("librarian", 0.1)]),
            &spec(),
            &g,
        )
        .unwrap();
        assert_eq!(r.passed, Some(true));
        let r = face_validity(
            &scores(&[("nurse", 0.4), ("mechanic", -0.6), ("librarian", -0.1)]),
            &spec(),
            &g,
        )
        .unwrap();
        assert_eq!(r.passed, Some(false));
        assert_eq!(r.summary["exceptions"], json!(["librarian"]));
        assert!(matches!(
            face_validity(&scores(&[("nurse", 0.4)]), &spec(), &g),
            Err(Error::MissingMeasurement(p)) if p == "mechanic"
        ));
    }

    #[test]
    fn stereotype_spec_rejects_duplicates_and_unknown_groups() {
        assert!(StereotypeSpec::from_json_str(
            r#"[{"profession":"a","group":"female"},{"profession":"a","group":"male"}]"#
        )
        .is_err());
        let s = StereotypeSpec::from_json_str(r#"[{"profession":"a","group":"other"}]"#).unwrap();
        assert!(s.validate(&groups()).is_err());
    }

    fn census_csv(rows: &[(&str, i32, f64)]) -> CensusSeries {
        let mut text = String::from("profession,decade,group,share\n");
        for (p, d, f) in rows {
            text.push_str(&format!("{p},{d},female,{f}\n{p},{d},male,{}\n", 1.0 - f));
        }
        CensusSeries::read(text.as_bytes()).unwrap()
    }

    #[test]
    fn census_validation() {
        let bad = "profession,decade,group,share\nnurse,1990,female,0.7\nnurse,1990,male,0.2\n";
        assert!(matches!(
            CensusSeries::read(bad.as_bytes()),
            Err(Error::InvalidDistribution(_))
        ));
        assert!(CensusSeries::read("a,b,c,d\n".as_bytes()).is_err());
        let c = census_csv(&[("nurse", 1990, 0.9)]);
        let u = Distribution::uniform(2).unwrap();
        let g = groups();
        let settings = MeasureSettings {
            groups: &g,
            reference: &u,
            normalizer: Normalizer::Sum,
            divergence: Divergence::L1,
        };
        assert!((c.score("nurse", 1990, &settings).unwrap().unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(c.score("nurse", 2000, &settings).unwrap(), None);
    }

    #[test]
    fn contemporary_proportional_shares_give_rank_one() {
        let professions = [("a", 0.9), ("b", 0.2), ("c", 0.55), ("d", 0.4), ("e", 0.7)];
        let census = census_csv(&professions.iter().map(|(p, f)| (*p, 2000, *f)).collect::<Vec<_>>());
        let g = groups();
        let u = Distribution::uniform(2).unwrap();
        let settings = MeasureSettings {
            groups: &g,
            reference: &u,
            normalizer: Normalizer::Sum,
            divergence: Divergence::L1,
        };
        let measured: BTreeMap<String, f64> = professions
            .iter()
            .map(|(p, f)| {
                let s = AssociationVector::new(vec![*f * 10.0, (1.0 - f) * 10.0]).unwrap();
                (p.to_string(), signed_binary_bias(&s, &u, Normalizer::Sum).unwrap())
            })
            .collect();
        let r = predictive_contemporary(&measured, &census, 2000, &settings, 1000, 1).unwrap();
        assert!((r.summary["spearman_rho"].as_f64().unwrap() - 1.0).abs() < 1e-12);

        let two = scores(&[("a", 0.1), ("b", 0.2)]);
        assert!(matches!(
            predictive_contemporary(&two, &census, 2000, &settings, 1000, 1),
            Err(Error::InsufficientOverlap { found: 2, required: 3 })
        ));
    }

    #[test]
    fn diachronic_uses_unweighted_decade_means() {
        let census = census_csv(&[
            ("a", 1900, 0.8),
            ("b", 1900, 0.6),
            ("a", 1950, 0.7),
            ("b", 1950, 0.5),
            ("a", 2000, 0.5),
            ("b", 2000, 0.5),
        ]);
        let g = groups();
        let u = Distribution::uniform(2).unwrap();
        let settings = MeasureSettings {
            groups: &g,
            reference: &u,
            normalizer: Normalizer::Sum,
            divergence: Divergence::L1,
        };
        let by_decade: BTreeMap<i32, BTreeMap<String, f64>> = [
            (1900, scores(&[("a", 0.5), ("b", 0.3)])),
            (1950, scores(&[("a", 0.2), ("b", 0.1)])),
            (2000, scores(&[("a", 0.0), ("b", 0.05)])),
        ]
        .into_iter()
        .collect();
        let r = predictive_diachronic(&by_decade, &census, &settings, 1000, 3).unwrap();
        let rows = &r.table("decades").unwrap().rows;
        assert!((rows[0][2].as_f64().unwrap() - 0.4).abs() < 1e-12);
        assert!((rows[0][3].as_f64().unwrap() - 0.4).abs() < 1e-12);
        assert!((r.summary["spearman_rho"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
}
