//! Margin-softmax losses over an embedding batch and a prototype set.
//!
//! Logits are `s * cos(theta_ic)` for non-target classes and
//! `s * target_logit(cos(theta_iy), m_i)` for the label, where the target
//! transform is an additive cosine margin (CosFace, ElasticFace-Cos+) or an
//! additive angular margin (ArcFace, ElasticFace-Arc+). ElasticFace variants
//! draw the per-sample margin from `N(m, sigma)`.
//!
//! Gradients are exact derivatives of the batch-mean cross entropy with
//! respect to every embedding and every prototype vector, treating the
//! cosine as the plain dot product of the inputs.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::dot;
use crate::ClassId;

/// Below this `sin(theta)` the angular-margin slope uses a clamped
/// denominator.
pub const SIN_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossVariant {
    CosFace,
    ArcFace,
    ElasticFaceCosPlus,
    ElasticFaceArcPlus,
}

impl LossVariant {
    pub const ALL: [LossVariant; 4] = [
        LossVariant::CosFace,
        LossVariant::ArcFace,
        LossVariant::ElasticFaceCosPlus,
        LossVariant::ElasticFaceArcPlus,
    ];

    pub fn is_angular(self) -> bool {
        matches!(self, LossVariant::ArcFace | LossVariant::ElasticFaceArcPlus)
    }

    pub fn is_elastic(self) -> bool {
        matches!(
            self,
            LossVariant::ElasticFaceCosPlus | LossVariant::ElasticFaceArcPlus
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            LossVariant::CosFace => "cosface",
            LossVariant::ArcFace => "arcface",
            LossVariant::ElasticFaceCosPlus => "elasticface-cos+",
            LossVariant::ElasticFaceArcPlus => "elasticface-arc+",
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosface" => Ok(LossVariant::CosFace),
            "arcface" => Ok(LossVariant::ArcFace),
            "elasticface-cos+" | "elasticface-cos" => Ok(LossVariant::ElasticFaceCosPlus),
            "elasticface-arc+" | "elasticface-arc" => Ok(LossVariant::ElasticFaceArcPlus),
            other => Err(Error::config(format!("loss: unknown value {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub variant: LossVariant,
    pub margin: f64,
    pub scale: f64,
    /// Standard deviation of the margin draw; ignored by non-elastic variants.
    pub sigma: f64,
}

impl LossSpec {
    pub fn cosface() -> Self {
        Self { variant: LossVariant::CosFace, margin: 0.4, scale: 64.0, sigma: 0.0 }
    }

    pub fn arcface() -> Self {
        Self { variant: LossVariant::ArcFace, margin: 0.5, scale: 64.0, sigma: 0.0 }
    }

    pub fn elasticface_cos_plus() -> Self {
        Self { variant: LossVariant::ElasticFaceCosPlus, margin: 0.4, scale: 64.0, sigma: 0.025 }
    }

    pub fn elasticface_arc_plus() -> Self {
        Self { variant: LossVariant::ElasticFaceArcPlus, margin: 0.5, scale: 64.0, sigma: 0.0175 }
    }

    /// The standard hyper-parameters for `variant`.
    pub fn standard(variant: LossVariant) -> Self {
        match variant {
            LossVariant::CosFace => Self::cosface(),
            LossVariant::ArcFace => Self::arcface(),
            LossVariant::ElasticFaceCosPlus => Self::elasticface_cos_plus(),
            LossVariant::ElasticFaceArcPlus => Self::elasticface_arc_plus(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidSpec(format!("scale must be positive, got {}", self.scale)));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::InvalidSpec(format!("margin must be non-negative, got {}", self.margin)));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidSpec(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Target-class transform of `cos_theta` and its derivative.
fn target_logit_with_slope(variant: LossVariant, cos_theta: f64, m: f64) -> (f64, f64) {
    if !variant.is_angular() {
        return (cos_theta - m, 1.0);
    }
    // theta + m > pi  <=>  cos(theta) < cos(pi - m)
    if m >= std::f64::consts::PI || cos_theta < (std::f64::consts::PI - m).cos() {
        return (cos_theta - m * m.sin(), 1.0);
    }
    let (sin_m, cos_m) = m.sin_cos();
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let value = cos_theta * cos_m - sin_theta * sin_m;
    // d/dcos of cos(theta + m) = sin(theta + m) / sin(theta)
    let slope = cos_m + cos_theta * sin_m / sin_theta.max(SIN_FLOOR);
    (value, slope)
}

/// Margin-penalized target cosine. `cos_theta` is clamped to `[-1, 1]`.
pub fn target_logit(variant: LossVariant, cos_theta: f64, effective_margin: f64) -> f64 {
    target_logit_with_slope(variant, cos_theta.clamp(-1.0, 1.0), effective_margin).0
}

/// One margin for one target sample: exactly `m` for fixed-margin variants,
/// otherwise a `N(m, sigma)` draw clamped at zero.
pub fn elastic_margin_draw<R: Rng + ?Sized>(spec: &LossSpec, rng: &mut R) -> f64 {
    if !spec.variant.is_elastic() || spec.sigma == 0.0 {
        return spec.margin;
    }
    let normal = Normal::new(spec.margin, spec.sigma).expect("validated sigma");
    normal.sample(rng).max(0.0)
}

pub fn draw_margins<R: Rng + ?Sized>(spec: &LossSpec, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| elastic_margin_draw(spec, rng)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub grad_embeddings: Vec<Vec<f64>>,
    pub grad_prototypes: Vec<Vec<f64>>,
    pub logits: Vec<Vec<f64>>,
    /// Per-sample cosine to the label prototype.
    pub target_cos: Vec<f64>,
}

/// Loss and gradients with margins drawn from `rng`.
pub fn loss_and_grad<E, P, R>(
    spec: &LossSpec,
    embeddings: &[E],
    labels: &[ClassId],
    prototypes: &[(ClassId, P)],
    rng: &mut R,
) -> Result<LossOutput>
where
    E: AsRef<[f64]>,
    P: AsRef<[f64]>,
    R: Rng + ?Sized,
{
    spec.validate()?;
    let margins = draw_margins(spec, embeddings.len(), rng);
    loss_and_grad_with_margins(spec, embeddings, labels, prototypes, &margins)
}

/// Loss and gradients with explicit per-sample margins.
pub fn loss_and_grad_with_margins<E, P>(
    spec: &LossSpec,
    embeddings: &[E],
    labels: &[ClassId],
    prototypes: &[(ClassId, P)],
    margins: &[f64],
) -> Result<LossOutput>
where
    E: AsRef<[f64]>,
    P: AsRef<[f64]>,
{
    spec.validate()?;
    let n = embeddings.len();
    if labels.len() != n || margins.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: if labels.len() != n { labels.len() } else { margins.len() },
        });
    }
    let d = prototypes.first().map(|(_, p)| p.as_ref().len()).unwrap_or(0);
    for v in embeddings
        .iter()
        .map(|e| e.as_ref())
        .chain(prototypes.iter().map(|(_, p)| p.as_ref()))
    {
        if v.len() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: v.len() });
        }
    }
    let targets: Vec<usize> = labels
        .iter()
        .map(|l| {
            prototypes
                .iter()
                .position(|(c, _)| c == l)
                .ok_or(Error::MissingPrototype(*l))
        })
        .collect::<Result<_>>()?;

    let s = spec.scale;
    let inv_n = 1.0 / n.max(1) as f64;
    let mut loss_terms = Vec::with_capacity(n);
    let mut logits = Vec::with_capacity(n);
    let mut target_cos = Vec::with_capacity(n);
    let mut grad_e = vec![vec![0.0; d]; n];
    let mut grad_p = vec![vec![0.0; d]; prototypes.len()];

    for (i, e) in embeddings.iter().enumerate() {
        let e = e.as_ref();
        let t = targets[i];
        let mut slope_t = 1.0;
        let z: Vec<f64> = prototypes
            .iter()
            .enumerate()
            .map(|(c, (_, p))| {
                let cos = dot(e, p.as_ref()).clamp(-1.0, 1.0);
                if c == t {
                    target_cos.push(cos);
                    let (v, slope) = target_logit_with_slope(spec.variant, cos, margins[i]);
                    slope_t = slope;
                    s * v
                } else {
                    s * cos
                }
            })
            .collect();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        loss_terms.push(max + total.ln() - z[t]);

        for (c, (_, p)) in prototypes.iter().enumerate() {
            let prob = exps[c] / total;
            let dz = (prob - if c == t { 1.0 } else { 0.0 }) * inv_n;
            let dcos = s * dz * if c == t { slope_t } else { 1.0 };
            if dcos == 0.0 {
                continue;
            }
            let p = p.as_ref();
            for k in 0..d {
                grad_e[i][k] += dcos * p[k];
                grad_p[c][k] += dcos * e[k];
            }
        }
        logits.push(z);
    }

    let loss = loss_terms.iter().sum::<f64>() * inv_n;
    Ok(LossOutput {
        loss,
        grad_embeddings: grad_e,
        grad_prototypes: grad_p,
        logits,
        target_cos,
    })
}
