//! Validity and reliability testing battery.
//!
//! Each criterion produces a [`Report`](crate::report::Report): face,
//! convergent and predictive validity, hypothesis validity through bias
//! amplification and mitigation, annotator agreement, and sensitivity to
//! word lists and to the normalizer/divergence choice. The comparator
//! measures and the projection-based mitigation baseline those criteria
//! need live here too.

mod agreement;
mod amplification;
mod comparators;
mod debias;
mod sensitivity;
mod validity;

use serde_json::Value;

use crate::contextual::{soa_cr_probe, ContextualVectorSet, ProbeModel};
use crate::embeddings::{soa_we_vector, CosineTransform, EmbeddingTable};
use crate::error::{Error, Result};
use crate::framework::{bias_value, divergence_l1, AssociationVector, Distribution, Divergence, Normalizer};
use crate::lexicon::{GroupSet, TargetConcept};
use crate::text::{soa_text_auto, SegmentedCorpus};

pub use agreement::agreement;
pub use amplification::amplification;
pub use comparators::{sum_of_cosines_score, weat_style_score};
pub use debias::{
    bias_direction, default_pairs, equalize, hard_debias, mitigation_eval, neutralize, project_out_all, Mitigation,
    MitigationConfig, NEUTRALIZE_TOLERANCE, POWER_ITERATION_MAX, POWER_ITERATION_TOL,
};
pub use sensitivity::{sensitivity, SensitivityPlan};
pub use validity::{
    convergent_validity, face_validity, predictive_contemporary, predictive_diachronic, CensusRow, CensusSeries,
    ConvergentConfig, StereotypeEntry, StereotypeSpec,
};

/// Directional two-group score: positive when group 0 is over-associated
/// relative to the reference. Its magnitude is exactly the ℓ₁ bias value.
pub fn signed_binary_bias(s: &AssociationVector, reference: &Distribution, normalizer: Normalizer) -> Result<f64> {
    if s.k() != 2 || reference.k() != 2 {
        return Err(Error::Precondition(format!(
            "signed binary score needs exactly 2 groups, got {}",
            s.k()
        )));
    }
    let p = normalizer.apply(s)?;
    let magnitude = divergence_l1(&p, reference)?;
    let (p, r) = (p.probs(), reference.probs());
    let direction = (p[0] - r[0]) - (p[1] - r[1]);
    Ok(if direction > 0.0 {
        magnitude
    } else if direction < 0.0 {
        -magnitude
    } else {
        0.0
    })
}

/// Score used when correlating against external data: the signed binary
/// score for two groups, the framework value otherwise.
pub fn directional_score(
    s: &AssociationVector,
    reference: &Distribution,
    normalizer: Normalizer,
    divergence: Divergence,
) -> Result<f64> {
    if s.k() == 2 && divergence == Divergence::L1 {
        signed_binary_bias(s, reference, normalizer)
    } else {
        bias_value(s, reference, normalizer, divergence)
    }
}

/// Where association strengths come from.
#[derive(Debug, Clone)]
pub enum MeasurementSource {
    Text {
        corpus: SegmentedCorpus,
        context_sentences: usize,
    },
    Embeddings {
        table: EmbeddingTable,
        transform: CosineTransform,
    },
    Probe {
        vectors: ContextualVectorSet,
        probe: ProbeModel,
    },
}

impl MeasurementSource {
    pub fn soa_variant(&self) -> &'static str {
        match self {
            MeasurementSource::Text { .. } => "text-auto",
            MeasurementSource::Embeddings { .. } => "embeddings",
            MeasurementSource::Probe { .. } => "contextual-probe",
        }
    }

    pub fn association(&self, target: &TargetConcept, groups: &GroupSet) -> Result<AssociationVector> {
        match self {
            MeasurementSource::Text {
                corpus,
                context_sentences,
            } => soa_text_auto(corpus, target, groups, *context_sentences),
            MeasurementSource::Embeddings { table, transform } => {
                Ok(soa_we_vector(target, groups, table, *transform)?.soa)
            }
            MeasurementSource::Probe { vectors, probe } => soa_cr_probe(vectors.for_target(target), probe, groups),
        }
    }

    pub fn with_transform(&self, transform: CosineTransform) -> Option<MeasurementSource> {
        match self {
            MeasurementSource::Embeddings { table, .. } => Some(MeasurementSource::Embeddings {
                table: table.clone(),
                transform,
            }),
            _ => None,
        }
    }
}

/// The measurement settings shared by a batch of targets.
#[derive(Debug, Clone)]
pub struct MeasureSettings<'a> {
    pub groups: &'a GroupSet,
    pub reference: &'a Distribution,
    pub normalizer: Normalizer,
    pub divergence: Divergence,
}

impl MeasureSettings<'_> {
    pub fn value(&self, source: &MeasurementSource, target: &TargetConcept) -> Result<f64> {
        let s = source.association(target, self.groups)?;
        bias_value(&s, self.reference, self.normalizer, self.divergence)
    }

    pub fn config(&self) -> Value {
        serde_json::json!({
            "groups": self.groups.names(),
            "reference": self.reference.probs(),
            "normalizer": self.normalizer.id(),
            "divergence": self.divergence.id(),
        })
    }
}
