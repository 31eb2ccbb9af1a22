//! Prototype generation and exemplar quality estimation.
//!
//! A prototype is the renormalized (optionally quality-weighted) mean of the
//! unit embeddings of one class. Three quality sources are provided:
//! feature norm relative to the batch maximum, and soft / hard
//! recognizability measured as the squared cosine distance to the
//! unrecognizable-identity prototype.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::{cosine_distance, feature_norm, RawEmbedding, UnitEmbedding, NORM_EPS};
use crate::ClassId;

/// Total quality mass below which weighted generation falls back to the
/// plain mean.
pub const QUALITY_MASS_EPS: f64 = 1e-12;

/// Non-negative, finite per-exemplar weight.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct QualityScore(f64);

impl QualityScore {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "quality must be finite and non-negative, got {value}"
            )));
        }
        Ok(Self(value))
    }

    pub const ONE: QualityScore = QualityScore(1.0);

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeCandidate {
    pub class_id: ClassId,
    pub embedding: UnitEmbedding,
}

/// How exemplar qualities are obtained and turned into a prototype.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimator {
    /// Plain mean, no quality path at all.
    Plain,
    /// Weighted mean with every quality equal to one.
    Uniform,
    /// Feature norm over the batch maximum.
    FeatureNorm,
    /// Squared cosine distance to the unrecognizable identity, weighted mean.
    RecogSoft,
    /// Squared cosine distance to the unrecognizable identity, argmax selection.
    RecogHard,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::Plain,
        Estimator::Uniform,
        Estimator::FeatureNorm,
        Estimator::RecogSoft,
        Estimator::RecogHard,
    ];

    pub fn needs_ui_prototype(self) -> bool {
        matches!(self, Estimator::RecogSoft | Estimator::RecogHard)
    }

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Plain => "none",
            Estimator::Uniform => "uniform",
            Estimator::FeatureNorm => "norm",
            Estimator::RecogSoft => "recog-soft",
            Estimator::RecogHard => "recog-hard",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "pm" => Ok(Estimator::Plain),
            "uniform" => Ok(Estimator::Uniform),
            "norm" | "feature-norm" => Ok(Estimator::FeatureNorm),
            "recog-soft" | "recog" => Ok(Estimator::RecogSoft),
            "recog-hard" => Ok(Estimator::RecogHard),
            // The hard variant is only defined for recognizability scores.
            "norm-hard" | "feature-norm-hard" => Err(Error::config(
                "estimator: hard selection is only defined for recognizability scores",
            )),
            other => Err(Error::config(format!("estimator: unknown value {other:?}"))),
        }
    }
}

fn check_dims(embeddings: &[UnitEmbedding]) -> Result<usize> {
    let first = embeddings
        .first()
        .ok_or_else(|| Error::InvalidSpec("prototype generation needs k >= 1".into()))?;
    let d = first.dim();
    for e in embeddings {
        if e.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: e.dim(),
            });
        }
    }
    Ok(d)
}

/// Normalized arithmetic mean of `embeddings`.
pub fn generate_prototype_basic(embeddings: &[UnitEmbedding]) -> Result<UnitEmbedding> {
    let d = check_dims(embeddings)?;
    let mut sum = vec![0.0; d];
    for e in embeddings {
        for (s, x) in sum.iter_mut().zip(e.as_slice()) {
            *s += *x;
        }
    }
    let k = embeddings.len() as f64;
    let mean: Vec<f64> = sum.into_iter().map(|s| s / k).collect();
    UnitEmbedding::normalized(&mean)
}

/// Normalized quality-weighted mean `sum(q_j x_j) / sum(q_j)`.
///
/// With all qualities equal to one this performs exactly the same floating
/// point operations as [`generate_prototype_basic`]. If the total quality
/// mass vanishes the plain mean is used instead.
pub fn generate_prototype_qa(
    embeddings: &[UnitEmbedding],
    qualities: &[QualityScore],
) -> Result<UnitEmbedding> {
    let d = check_dims(embeddings)?;
    if qualities.len() != embeddings.len() {
        return Err(Error::DimensionMismatch {
            expected: embeddings.len(),
            actual: qualities.len(),
        });
    }
    let mut sum = vec![0.0; d];
    let mut mass = 0.0;
    for (e, q) in embeddings.iter().zip(qualities) {
        let q = q.value();
        mass += q;
        for (s, x) in sum.iter_mut().zip(e.as_slice()) {
            *s += q * *x;
        }
    }
    if mass <= QUALITY_MASS_EPS {
        log::warn!("total quality {mass:e} of {} exemplars vanished; using plain mean", embeddings.len());
        return generate_prototype_basic(embeddings);
    }
    let mean: Vec<f64> = sum.into_iter().map(|s| s / mass).collect();
    UnitEmbedding::normalized(&mean)
}

/// `q_j = ||x_j|| / max_i ||x_i||` over the whole batch.
pub fn quality_feature_norm(batch: &[RawEmbedding]) -> Result<Vec<QualityScore>> {
    let norms: Vec<f64> = batch.iter().map(feature_norm).collect();
    let max = norms.iter().copied().fold(0.0f64, f64::max);
    if batch.is_empty() || max <= NORM_EPS {
        return Err(Error::DegenerateVector { norm: max });
    }
    Ok(norms.into_iter().map(|n| QualityScore(n / max)).collect())
}

/// `q_j = D_cos(x_j, p_ui)^2`, in `[0, 4]`.
pub fn quality_recognizability(batch: &[UnitEmbedding], p_ui: &UnitEmbedding) -> Vec<QualityScore> {
    batch
        .iter()
        .map(|x| {
            let dist = cosine_distance(x, p_ui);
            QualityScore(dist * dist)
        })
        .collect()
}

/// Index of the highest quality; ties resolve to the lowest index.
pub fn argmax_quality(qualities: &[QualityScore]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, q) in qualities.iter().enumerate() {
        match best {
            Some((_, b)) if q.value() <= b => {}
            _ => best = Some((i, q.value())),
        }
    }
    best.map(|(i, _)| i)
}

/// The single exemplar with the largest quality.
pub fn select_hard_prototype(
    embeddings: &[UnitEmbedding],
    qualities: &[QualityScore],
) -> Result<UnitEmbedding> {
    check_dims(embeddings)?;
    if qualities.len() != embeddings.len() {
        return Err(Error::DimensionMismatch {
            expected: embeddings.len(),
            actual: qualities.len(),
        });
    }
    let idx = argmax_quality(qualities).expect("non-empty");
    Ok(embeddings[idx].clone())
}

/// Builds a prototype for one class group according to `estimator`.
///
/// `qualities` is ignored for [`Estimator::Plain`] and must otherwise match
/// `embeddings` in length.
pub fn generate_with(
    estimator: Estimator,
    embeddings: &[UnitEmbedding],
    qualities: &[QualityScore],
) -> Result<UnitEmbedding> {
    match estimator {
        Estimator::Plain => generate_prototype_basic(embeddings),
        Estimator::RecogHard => select_hard_prototype(embeddings, qualities),
        Estimator::Uniform | Estimator::FeatureNorm | Estimator::RecogSoft => {
            generate_prototype_qa(embeddings, qualities)
        }
    }
}

/// Qualities for a whole batch.
///
/// `p_ui` is required by the recognizability estimators.
pub fn estimate_qualities(
    estimator: Estimator,
    raw: &[RawEmbedding],
    unit: &[UnitEmbedding],
    p_ui: Option<&UnitEmbedding>,
) -> Result<Vec<QualityScore>> {
    match estimator {
        Estimator::Plain | Estimator::Uniform => Ok(vec![QualityScore::ONE; unit.len()]),
        Estimator::FeatureNorm => quality_feature_norm(raw),
        Estimator::RecogSoft | Estimator::RecogHard => {
            let p_ui = p_ui.ok_or_else(|| {
                Error::InvalidSpec(format!("estimator {estimator} needs an unrecognizable-identity prototype"))
            })?;
            Ok(quality_recognizability(unit, p_ui))
        }
    }
}
