//! Dense vector primitives.
//!
//! Embeddings come in two flavours: [`RawEmbedding`] is whatever the encoder
//! produced (its norm carries quality information), [`UnitEmbedding`] is the
//! L2-normalized direction used for every cosine computation. All reductions
//! go through Neumaier-compensated summation so that 512-dimensional dot
//! products are reproducible to ~1e-15.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms at or below this are treated as having no direction.
pub const NORM_EPS: f64 = 1e-12;

/// Tolerance used when checking that a vector is unit-norm.
pub const UNIT_TOL: f64 = 1e-9;

/// Neumaier compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    compensated_sum(a.iter().zip(b).map(|(x, y)| x * y))
}

pub fn norm(a: &[f64]) -> f64 {
    // Scale by the largest magnitude so squaring cannot overflow or underflow.
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    scale * compensated_sum(a.iter().map(|v| (v / scale) * (v / scale))).sqrt()
}

/// Encoder output before normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEmbedding(Vec<f64>);

impl RawEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("raw embedding"));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for RawEmbedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A direction on the unit sphere, `| ||v|| - 1 | <= 1e-9`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitEmbedding(Vec<f64>);

impl UnitEmbedding {
    /// Wraps `values` after checking the unit-norm invariant.
    pub fn try_from_unit(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("unit embedding"));
        }
        let n = norm(&values);
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::format(
                "unit embedding",
                format!("norm {n} is not 1 within {UNIT_TOL:e}"),
            ));
        }
        Ok(Self(values))
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn normalized(values: &[f64]) -> Result<Self> {
        let n = norm(values);
        if !n.is_finite() {
            return Err(Error::NonFinite("vector to normalize"));
        }
        if n <= NORM_EPS {
            return Err(Error::DegenerateVector { norm: n });
        }
        Ok(Self(values.iter().map(|v| v / n).collect()))
    }

    /// Unit vector along coordinate `axis`.
    pub fn axis(dim: usize, axis: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn neg(&self) -> Self {
        Self(self.0.iter().map(|v| -v).collect())
    }
}

impl AsRef<[f64]> for UnitEmbedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

pub fn l2_normalize(x: &RawEmbedding) -> Result<UnitEmbedding> {
    UnitEmbedding::normalized(x.as_slice())
}

pub fn feature_norm(x: &RawEmbedding) -> f64 {
    norm(x.as_slice())
}

/// Dot product of two unit vectors, clamped to `[-1, 1]`.
///
/// Bitwise-identical inputs return exactly 1 so that the self-distance is
/// exactly zero.
pub fn cosine_similarity(a: &UnitEmbedding, b: &UnitEmbedding) -> f64 {
    if a.0 == b.0 {
        return 1.0;
    }
    dot(&a.0, &b.0).clamp(-1.0, 1.0)
}

/// `1 - cosine_similarity`, in `[0, 2]`.
pub fn cosine_distance(a: &UnitEmbedding, b: &UnitEmbedding) -> f64 {
    1.0 - cosine_similarity(a, b)
}

/// Angle between two unit vectors in degrees.
pub fn angle_degrees(a: &UnitEmbedding, b: &UnitEmbedding) -> f64 {
    cosine_similarity(a, b).acos().to_degrees()
}
