use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense embedding. The dimension is carried at runtime so embedders of
/// different widths can coexist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::contract("feature vector has no components"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("feature vector has non-finite components"));
        }
        Ok(Self { values })
    }

    /// Unit vector along axis `axis` of a `dim`-dimensional space.
    pub fn basis(dim: usize, axis: usize) -> Self {
        let mut values = vec![0.0; dim];
        values[axis] = 1.0;
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dot(&self, other: &FeatureVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scaled(&self, factor: f64) -> FeatureVector {
        FeatureVector {
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Rescale to unit Euclidean norm.
pub fn normalize(a: &FeatureVector) -> Result<FeatureVector> {
    let norm = a.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::contract("cannot normalize a zero vector"));
    }
    Ok(a.scaled(1.0 / norm))
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::contract(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::contract("cosine similarity of a zero vector"));
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn identity_and_orthogonality() {
        let u = normalize(&fv(&[0.3, -0.4, 1.2])).unwrap();
        assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&fv(&[1.0, 0.0]), &fv(&[0.0, 1.0])).unwrap(), 0.0);
    }

    #[test]
    fn three_four_against_four_three() {
        // (3*4 + 4*3) / (5 * 5)
        let c = cosine_similarity(&fv(&[3.0, 4.0]), &fv(&[4.0, 3.0])).unwrap();
        assert!((c - 0.96).abs() < 1e-12);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&fv(&[2.0, 0.0])).unwrap().values(), &[1.0, 0.0]);
        let half_root = std::f64::consts::FRAC_1_SQRT_2;
        let n = normalize(&fv(&[1.0, 1.0])).unwrap();
        assert!((n.values()[0] - half_root).abs() < 1e-12);
        assert!((n.values()[1] - half_root).abs() < 1e-12);
        let again = normalize(&n).unwrap();
        for (a, b) in again.values().iter().zip(n.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn errors() {
        assert!(normalize(&fv(&[0.0, 0.0])).is_err());
        assert!(cosine_similarity(&fv(&[1.0]), &fv(&[1.0, 0.0])).is_err());
        assert!(cosine_similarity(&fv(&[0.0, 0.0]), &fv(&[1.0, 0.0])).is_err());
        assert!(FeatureVector::new(vec![f64::NAN]).is_err());
        assert!(FeatureVector::new(vec![]).is_err());
    }
}
