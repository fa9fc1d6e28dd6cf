//! Association vectors, normalizers, divergences and the composed bias
//! measurement.
//!
//! A bias measurement takes the observed strengths of association between a
//! target concept and each of `k` social groups, maps them onto a categorical
//! distribution, and reports how far that distribution is from an explicit
//! reference distribution:
//!
//! ```
//! use divdist::framework::{bias_value, AssociationVector, Distribution, Divergence, Normalizer};
//!
//! let s = AssociationVector::new(vec![3.0, 1.0]).unwrap();
//! let uniform = Distribution::uniform(2).unwrap();
//! let value = bias_value(&s, &uniform, Normalizer::Sum, Divergence::L1).unwrap();
//! assert!((value - 0.5).abs() < 1e-15);
//! ```
//!
//! Every reduction over group entries goes through [`ordered_sum`], which
//! sums a sorted copy of its input. Results therefore do not depend on the
//! order in which groups are listed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Tolerance for a normalized distribution's sum.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Tolerance applied to user-supplied reference distributions before they
/// are renormalized.
pub const REFERENCE_TOLERANCE: f64 = 1e-6;

/// Compensated sum of a sorted copy of `values`.
///
/// The result depends only on the multiset of values, not their order.
pub fn ordered_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    let mut compensation = 0.0;
    for v in sorted {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

/// Observed strengths of association between one target and `k` groups.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct AssociationVector(Vec<f64>);

impl AssociationVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Arity(values.len()));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidAssociation(format!(
                "entry {i} is {v}; entries must be finite and non-negative"
            )));
        }
        Ok(AssociationVector(values))
    }

    /// Builds a vector from integer counts.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        Self::new(counts.iter().map(|&c| c as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl<'de> Deserialize<'de> for AssociationVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        AssociationVector::new(values).map_err(serde::de::Error::custom)
    }
}

/// A categorical distribution over the `k` groups.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Validates probabilities that must already sum to one within
    /// [`SUM_TOLERANCE`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::validate(&probs, SUM_TOLERANCE)?;
        Ok(Distribution(probs))
    }

    /// Validates `weights` within `tolerance`, then divides by their sum.
    pub fn renormalized(weights: Vec<f64>, tolerance: f64) -> Result<Self> {
        Self::validate(&weights, tolerance)?;
        let total = ordered_sum(&weights);
        Ok(Distribution(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Arity(k));
        }
        Ok(Distribution(vec![1.0 / k as f64; k]))
    }

    fn validate(probs: &[f64], tolerance: f64) -> Result<()> {
        if probs.len() < 2 {
            return Err(Error::Arity(probs.len()));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0) {
            return Err(Error::InvalidDistribution(format!("probability {p} outside [0, 1]")));
        }
        let total = ordered_sum(probs);
        if (total - 1.0).abs() > tolerance {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        Ok(())
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }
}

/// How a reference distribution is specified in configuration: the string
/// `"uniform"` or an explicit array of probabilities.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSpec {
    Uniform,
    Explicit(Vec<f64>),
}

impl ReferenceSpec {
    /// Produces the distribution for `k` groups. Explicit arrays are checked
    /// against [`REFERENCE_TOLERANCE`] and renormalized.
    pub fn resolve(&self, k: usize) -> Result<Distribution> {
        match self {
            ReferenceSpec::Uniform => Distribution::uniform(k),
            ReferenceSpec::Explicit(probs) => {
                if probs.len() != k {
                    return Err(Error::LengthMismatch {
                        expected: k,
                        found: probs.len(),
                    });
                }
                Distribution::renormalized(probs.clone(), REFERENCE_TOLERANCE)
            }
        }
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        match value {
            serde_json::Value::String(s) if s == "uniform" => Ok(ReferenceSpec::Uniform),
            serde_json::Value::Array(items) => items
                .iter()
                .map(|v| {
                    v.as_f64()
                        .ok_or_else(|| Error::InvalidDistribution(format!("non-numeric entry {v}")))
                })
                .collect::<Result<Vec<_>>>()
                .map(ReferenceSpec::Explicit),
            other => Err(Error::InvalidDistribution(format!(
                "expected \"uniform\" or an array of numbers, found {other}"
            ))),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            ReferenceSpec::Uniform => serde_json::Value::from("uniform"),
            ReferenceSpec::Explicit(probs) => serde_json::Value::from(probs.clone()),
        }
    }
}

impl FromStr for ReferenceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim();
        if trimmed == "uniform" {
            return Ok(ReferenceSpec::Uniform);
        }
        let value: serde_json::Value = serde_json::from_str(trimmed)?;
        ReferenceSpec::from_json(&value)
    }
}

impl Serialize for ReferenceSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ReferenceSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        ReferenceSpec::from_json(&value).map_err(serde::de::Error::custom)
    }
}

/// Maps an association vector onto a categorical distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalizer {
    #[default]
    Sum,
    Softmax,
}

impl Normalizer {
    pub const ALL: [Normalizer; 2] = [Normalizer::Sum, Normalizer::Softmax];

    pub fn id(self) -> &'static str {
        match self {
            Normalizer::Sum => "sum",
            Normalizer::Softmax => "softmax",
        }
    }

    pub fn apply(self, s: &AssociationVector) -> Result<Distribution> {
        match self {
            Normalizer::Sum => normalize_sum(s),
            Normalizer::Softmax => normalize_softmax(s.values()),
        }
    }
}

impl fmt::Display for Normalizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Normalizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Normalizer::Sum),
            "softmax" => Ok(Normalizer::Softmax),
            other => Err(Error::parse_msg(format!("unknown normalizer {other:?}"))),
        }
    }
}

/// Distance between two categorical distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    #[default]
    L1,
    L2,
    Js,
}

impl Divergence {
    pub const ALL: [Divergence; 3] = [Divergence::L1, Divergence::L2, Divergence::Js];

    pub fn id(self) -> &'static str {
        match self {
            Divergence::L1 => "l1",
            Divergence::L2 => "l2",
            Divergence::Js => "js",
        }
    }

    pub fn apply(self, p: &Distribution, q: &Distribution) -> Result<f64> {
        match self {
            Divergence::L1 => divergence_l1(p, q),
            Divergence::L2 => divergence_l2(p, q),
            Divergence::Js => divergence_js(p, q),
        }
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Divergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Divergence::L1),
            "l2" => Ok(Divergence::L2),
            "js" => Ok(Divergence::Js),
            other => Err(Error::parse_msg(format!("unknown divergence {other:?}"))),
        }
    }
}

/// Divides each entry by the sum of all entries.
pub fn normalize_sum(s: &AssociationVector) -> Result<Distribution> {
    if s.is_zero() {
        return Err(Error::ZeroVector);
    }
    let total = ordered_sum(s.values());
    Ok(Distribution(s.values().iter().map(|v| v / total).collect()))
}

/// Softmax with max-subtraction. Defined for any finite input.
pub fn normalize_softmax(values: &[f64]) -> Result<Distribution> {
    if values.len() < 2 {
        return Err(Error::Arity(values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let total = ordered_sum(&exps);
    Ok(Distribution(exps.into_iter().map(|e| e / total).collect()))
}

fn check_lengths(p: &Distribution, q: &Distribution) -> Result<()> {
    if p.k() != q.k() {
        return Err(Error::LengthMismatch {
            expected: p.k(),
            found: q.k(),
        });
    }
    Ok(())
}

pub fn divergence_l1(p: &Distribution, q: &Distribution) -> Result<f64> {
    check_lengths(p, q)?;
    let diffs: Vec<f64> = p.0.iter().zip(&q.0).map(|(a, b)| (a - b).abs()).collect();
    Ok(ordered_sum(&diffs))
}

pub fn divergence_l2(p: &Distribution, q: &Distribution) -> Result<f64> {
    check_lengths(p, q)?;
    let squares: Vec<f64> = p.0.iter().zip(&q.0).map(|(a, b)| (a - b) * (a - b)).collect();
    Ok(ordered_sum(&squares).sqrt())
}

/// Jensen-Shannon divergence with base-2 logarithms, so the value lies in
/// `[0, 1]`. Terms with zero probability contribute nothing.
pub fn divergence_js(p: &Distribution, q: &Distribution) -> Result<f64> {
    check_lengths(p, q)?;
    let terms: Vec<f64> =
        p.0.iter()
            .zip(&q.0)
            .map(|(&a, &b)| {
                let m = 0.5 * (a + b);
                let term = |x: f64| if x > 0.0 { x * (x / m).log2() } else { 0.0 };
                0.5 * (term(a) + term(b))
            })
            .collect();
    Ok(ordered_sum(&terms).clamp(0.0, 1.0))
}

/// Descriptive metadata carried alongside a bias value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub target: String,
    pub groups: Vec<String>,
    pub soa_variant: String,
}

/// A bias value together with everything needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasMeasurement {
    pub value: f64,
    pub target: String,
    pub groups: Vec<String>,
    pub reference: Vec<f64>,
    pub observed: Vec<f64>,
    pub soa_variant: String,
    pub normalize_id: String,
    pub divergence_id: String,
}

/// Divergence between the normalized observed associations and the
/// reference distribution.
pub fn bias_value(
    s: &AssociationVector,
    reference: &Distribution,
    normalizer: Normalizer,
    divergence: Divergence,
) -> Result<f64> {
    Ok(bias_parts(s, reference, normalizer, divergence)?.0)
}

fn bias_parts(
    s: &AssociationVector,
    reference: &Distribution,
    normalizer: Normalizer,
    divergence: Divergence,
) -> Result<(f64, Distribution)> {
    if s.k() != reference.k() {
        return Err(Error::LengthMismatch {
            expected: reference.k(),
            found: s.k(),
        });
    }
    let observed = normalizer.apply(s)?;
    let value = divergence.apply(&observed, reference)?;
    Ok((value, observed))
}

pub fn bias(
    s: &AssociationVector,
    reference: &Distribution,
    normalizer: Normalizer,
    divergence: Divergence,
    provenance: Provenance,
) -> Result<BiasMeasurement> {
    let (value, observed) = bias_parts(s, reference, normalizer, divergence)?;
    Ok(BiasMeasurement {
        value,
        target: provenance.target,
        groups: provenance.groups,
        reference: reference.probs().to_vec(),
        observed: observed.0,
        soa_variant: provenance.soa_variant,
        normalize_id: normalizer.id().to_string(),
        divergence_id: divergence.id().to_string(),
    })
}

/// Closed form of the two-group measurement against the uniform reference:
/// `|x - y| / (x + y)`.
pub fn binary_closed_form(x: f64, y: f64) -> Result<f64> {
    if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 {
        return Err(Error::InvalidAssociation(format!(
            "({x}, {y}) must be finite and non-negative"
        )));
    }
    if x + y == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((x - y).abs() / (x + y))
}
