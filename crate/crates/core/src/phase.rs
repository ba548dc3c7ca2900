//! Phase-space points.

use std::ops::{Deref, DerefMut};

use nalgebra::DVector;

/// A point `z = (q, p)` of the 2d-dimensional phase space, positions first.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector(DVector<f64>);

impl PhaseVector {
    pub fn new(q: &[f64], p: &[f64]) -> Self {
        assert_eq!(q.len(), p.len(), "position and momentum blocks differ in length");
        Self(DVector::from_iterator(
            q.len() * 2,
            q.iter().chain(p.iter()).copied(),
        ))
    }

    /// Builds from the concatenated `(q, p)` slice. Panics on odd length.
    pub fn from_slice(z: &[f64]) -> Self {
        assert!(z.len() % 2 == 0 && !z.is_empty(), "phase vector needs even length");
        Self(DVector::from_column_slice(z))
    }

    pub fn from_vector(z: DVector<f64>) -> Self {
        assert!(z.len() % 2 == 0 && !z.is_empty(), "phase vector needs even length");
        Self(z)
    }

    pub fn zeros(d: usize) -> Self {
        Self(DVector::zeros(2 * d))
    }

    /// Configuration-space dimension d.
    pub fn dim(&self) -> usize {
        self.0.len() / 2
    }

    pub fn q(&self) -> &[f64] {
        &self.0.as_slice()[..self.dim()]
    }

    pub fn p(&self) -> &[f64] {
        &self.0.as_slice()[self.dim()..]
    }

    /// Symplectic form `σ(self, other) = self · J other = q·p' − p·q'`.
    pub fn sigma(&self, other: &PhaseVector) -> f64 {
        let d = self.dim();
        assert_eq!(d, other.dim());
        let mut s = 0.0;
        for k in 0..d {
            s += self.0[k] * other.0[d + k] - self.0[d + k] * other.0[k];
        }
        s
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for PhaseVector {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl DerefMut for PhaseVector {
    fn deref_mut(&mut self) -> &mut DVector<f64> {
        &mut self.0
    }
}

impl From<DVector<f64>> for PhaseVector {
    fn from(v: DVector<f64>) -> Self {
        Self::from_vector(v)
    }
}
