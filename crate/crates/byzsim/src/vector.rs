//! Dense vectors in model space.

use crate::error::{Result, SimError};

/// Dense real vector of the model dimension. Immutable in spirit: all
/// arithmetic returns new vectors or writes through explicit mutators.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Vector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    fn check_len(&self, other: &Vector) -> Result<()> {
        if self.len() != other.len() {
            return Err(SimError::Dimension {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        self.check_len(other)?;
        Ok(Vector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        self.check_len(other)?;
        Ok(Vector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn scale(&self, scalar: f64) -> Vector {
        Vector(self.0.iter().map(|a| a * scalar).collect())
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        self.check_len(other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    /// Squared Euclidean norm.
    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum()
    }

    /// Squared Euclidean distance to `other`.
    pub fn dist_sq(&self, other: &Vector) -> Result<f64> {
        self.check_len(other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| {
                let d = a - b;
                d * d
            })
            .sum())
    }

    /// `self[j] += c * other[j]` elementwise.
    pub fn axpy(&mut self, c: f64, other: &Vector) -> Result<()> {
        self.check_len(other)?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|a| a.is_finite())
    }

    /// Exact bitwise equality, distinguishing -0.0 from +0.0.
    pub fn bit_eq(&self, other: &Vector) -> bool {
        self.len() == other.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Mean of `vectors[k][j]` over `k`, summed in input order then divided by
/// the count. The fixed order keeps results identical across schedules.
pub fn mean_of(vectors: &[Vector]) -> Result<Vector> {
    if vectors.is_empty() {
        return Err(SimError::config("mean of empty vector set"));
    }
    let dim = vectors[0].len();
    let mut acc = Vector::zeros(dim);
    for v in vectors {
        acc.check_len(v)?;
        for (a, b) in acc.0.iter_mut().zip(&v.0) {
            *a += b;
        }
    }
    let n = vectors.len() as f64;
    for a in acc.0.iter_mut() {
        *a /= n;
    }
    Ok(acc)
}
