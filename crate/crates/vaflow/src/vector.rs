//! Dense parameter vectors.

use std::fmt;
use std::ops::Index;

/// An N-dimensional real parameter vector θ.
///
/// This is the shared state of both applications: positions in cost-function
/// space for gradient descent, joint angles (radians) for inverse kinematics.
#[derive(Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Wraps the given components. At least one component is required.
    pub fn new(components: Vec<f64>) -> Self {
        assert!(
            !components.is_empty(),
            "ParamVector must have dimension >= 1"
        );
        ParamVector(components)
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dot: dimension mismatch");
        self.0.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    /// Returns `self + coeff * other`.
    pub fn add_scaled(&self, coeff: f64, other: &ParamVector) -> ParamVector {
        assert_eq!(self.dim(), other.dim(), "add_scaled: dimension mismatch");
        self.0
            .iter()
            .zip(other.iter())
            .map(|(a, b)| a + coeff * b)
            .collect()
    }

    pub fn scaled(&self, coeff: f64) -> ParamVector {
        self.0.iter().map(|a| coeff * a).collect()
    }
}

impl fmt::Debug for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector::new(v)
    }
}

impl From<&[f64]> for ParamVector {
    fn from(v: &[f64]) -> Self {
        ParamVector::new(v.to_vec())
    }
}

impl FromIterator<f64> for ParamVector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        ParamVector::new(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a ParamVector {
    type Item = &'a f64;
    type IntoIter = std::slice::Iter<'a, f64>;
    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_and_dot() {
        let v = ParamVector::new(vec![3.0, 4.0]);
        assert_eq!(v.norm(), 5.0);
        let w = ParamVector::new(vec![1.0, -1.0]);
        assert_eq!(v.dot(&w), -1.0);
    }

    #[test]
    fn add_scaled_combines() {
        let v = ParamVector::new(vec![1.0, 2.0]);
        let w = ParamVector::new(vec![10.0, -10.0]);
        assert_eq!(v.add_scaled(0.5, &w).as_slice(), &[6.0, -3.0]);
    }

    #[test]
    #[should_panic]
    fn empty_vector_rejected() {
        let _ = ParamVector::new(vec![]);
    }
}
