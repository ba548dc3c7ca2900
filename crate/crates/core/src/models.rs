//! Hamiltonians `H_δ = H₀ + δ V` on phase space.
//!
//! The built-in one-dimensional models all have the kinetic-plus-potential
//! form `p²/2 + U(q)`, which is what the grid oracle and the action
//! quadrature require. A general quadratic form is available in any
//! dimension.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{EchoError, Result};

/// Unperturbed Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseModel {
    /// `p²/2`.
    Free,
    /// `p²/2 + ω² q²/2`.
    Harmonic { omega: f64 },
    /// `p²/2 + q⁴`.
    Quartic,
    /// `p²/2 + q²/2 + α q⁴`.
    Anharmonic { alpha: f64 },
    /// `p²/2 − cos q`.
    Pendulum,
    /// `p²/2 + q⁴/4 − q²/2`.
    DoubleWell,
    /// `½ X · M X` with `M` real symmetric `2d × 2d`.
    Quadratic { matrix: DMatrix<f64> },
}

/// Shape `V` of the perturbation `δ V`.
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    /// `q` (one dimension).
    Linear,
    /// `q²` (one dimension).
    Quadratic,
    /// `cos q` (one dimension).
    Cosine,
    /// `c · X` in any dimension.
    LinearForm { coeffs: DVector<f64> },
    /// `½ X · M X` in any dimension.
    QuadraticForm { matrix: DMatrix<f64> },
}

impl BaseModel {
    pub fn dim(&self) -> usize {
        match self {
            BaseModel::Quadratic { matrix } => matrix.nrows() / 2,
            _ => 1,
        }
    }

    /// Potential `U(q)` and its first two derivatives, for the `p²/2 + U` models.
    fn potential(&self, q: f64) -> Option<(f64, f64, f64)> {
        Some(match *self {
            BaseModel::Free => (0.0, 0.0, 0.0),
            BaseModel::Harmonic { omega } => {
                let w2 = omega * omega;
                (0.5 * w2 * q * q, w2 * q, w2)
            }
            BaseModel::Quartic => (q.powi(4), 4.0 * q.powi(3), 12.0 * q * q),
            BaseModel::Anharmonic { alpha } => (
                0.5 * q * q + alpha * q.powi(4),
                q + 4.0 * alpha * q.powi(3),
                1.0 + 12.0 * alpha * q * q,
            ),
            BaseModel::Pendulum => (-q.cos(), q.sin(), q.cos()),
            BaseModel::DoubleWell => (
                0.25 * q.powi(4) - 0.5 * q * q,
                q.powi(3) - q,
                3.0 * q * q - 1.0,
            ),
            BaseModel::Quadratic { .. } => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaseModel::Free => "free",
            BaseModel::Harmonic { .. } => "harmonic",
            BaseModel::Quartic => "quartic",
            BaseModel::Anharmonic { .. } => "anharmonic",
            BaseModel::Pendulum => "pendulum",
            BaseModel::DoubleWell => "double-well",
            BaseModel::Quadratic { .. } => "quadratic",
        }
    }

    /// True when the Hamiltonian is a polynomial of degree at most two.
    pub fn is_quadratic(&self) -> bool {
        matches!(
            self,
            BaseModel::Free | BaseModel::Harmonic { .. } | BaseModel::Quadratic { .. }
        )
    }
}

impl Perturbation {
    fn one_dimensional(&self) -> bool {
        matches!(
            self,
            Perturbation::Linear | Perturbation::Quadratic | Perturbation::Cosine
        )
    }

    fn potential(&self, q: f64) -> Option<(f64, f64, f64)> {
        Some(match self {
            Perturbation::Linear => (q, 1.0, 0.0),
            Perturbation::Quadratic => (q * q, 2.0 * q, 2.0),
            Perturbation::Cosine => (q.cos(), -q.sin(), -q.cos()),
            Perturbation::LinearForm { coeffs } if coeffs.len() == 2 && coeffs[1] == 0.0 => {
                (coeffs[0] * q, coeffs[0], 0.0)
            }
            Perturbation::QuadraticForm { matrix }
                if matrix.nrows() == 2
                    && matrix[(0, 1)] == 0.0
                    && matrix[(1, 0)] == 0.0
                    && matrix[(1, 1)] == 0.0 =>
            {
                let m = matrix[(0, 0)];
                (0.5 * m * q * q, m * q, m)
            }
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Perturbation::Linear => "q",
            Perturbation::Quadratic => "q^2",
            Perturbation::Cosine => "cos(q)",
            Perturbation::LinearForm { .. } => "linear-form",
            Perturbation::QuadraticForm { .. } => "quadratic-form",
        }
    }

    fn is_quadratic(&self) -> bool {
        !matches!(self, Perturbation::Cosine)
    }
}

/// `H_δ = H₀ + δ V` with value, gradient and Hessian.
#[derive(Clone, PartialEq)]
pub struct HamiltonianModel {
    base: BaseModel,
    perturbation: Option<Perturbation>,
    delta: f64,
}

impl fmt::Debug for HamiltonianModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.base.name())?;
        if let Some(p) = &self.perturbation {
            write!(f, " + {} * {}", self.delta, p.name())?;
        }
        Ok(())
    }
}

impl HamiltonianModel {
    pub fn new(base: BaseModel) -> Result<Self> {
        if let BaseModel::Quadratic { matrix } = &base {
            check_symmetric_even(matrix)?;
        }
        if let BaseModel::Harmonic { omega } = base {
            if !(omega > 0.0) {
                return Err(EchoError::InvalidInput(format!("omega must be > 0, got {omega}")));
            }
        }
        Ok(Self {
            base,
            perturbation: None,
            delta: 0.0,
        })
    }

    pub fn with_perturbation(mut self, perturbation: Perturbation, delta: f64) -> Result<Self> {
        let d = self.base.dim();
        match &perturbation {
            p if p.one_dimensional() && d != 1 => {
                return Err(EchoError::InvalidDimension(format!(
                    "perturbation {} is one-dimensional, model has d = {d}",
                    p.name()
                )))
            }
            Perturbation::LinearForm { coeffs } if coeffs.len() != 2 * d => {
                return Err(EchoError::InvalidDimension("linear form length".into()))
            }
            Perturbation::QuadraticForm { matrix } => {
                check_symmetric_even(matrix)?;
                if matrix.nrows() != 2 * d {
                    return Err(EchoError::InvalidDimension("quadratic form size".into()));
                }
            }
            _ => {}
        }
        if !delta.is_finite() {
            return Err(EchoError::InvalidInput("delta must be finite".into()));
        }
        self.perturbation = Some(perturbation);
        self.delta = delta;
        Ok(self)
    }

    pub fn harmonic(omega: f64) -> Self {
        Self::new(BaseModel::Harmonic { omega }).expect("valid omega")
    }

    pub fn quartic() -> Self {
        Self::new(BaseModel::Quartic).expect("valid")
    }

    pub fn free() -> Self {
        Self::new(BaseModel::Free).expect("valid")
    }

    pub fn pendulum() -> Self {
        Self::new(BaseModel::Pendulum).expect("valid")
    }

    pub fn double_well() -> Self {
        Self::new(BaseModel::DoubleWell).expect("valid")
    }

    pub fn anharmonic(alpha: f64) -> Self {
        Self::new(BaseModel::Anharmonic { alpha }).expect("valid")
    }

    /// The same model with the perturbation switched off.
    pub fn unperturbed(&self) -> Self {
        Self {
            base: self.base.clone(),
            perturbation: None,
            delta: 0.0,
        }
    }

    pub fn base(&self) -> &BaseModel {
        &self.base
    }

    pub fn perturbation(&self) -> Option<&Perturbation> {
        self.perturbation.as_ref()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// True when `H_δ` is at most quadratic, so coherent states stay coherent.
    pub fn is_quadratic(&self) -> bool {
        self.base.is_quadratic()
            && self
                .perturbation
                .as_ref()
                .map_or(true, |p| p.is_quadratic() || self.delta == 0.0)
    }

    /// Total potential `U(q) + δ v(q)` and two derivatives, when the model has
    /// the form `p²/2 + U(q)` in one dimension.
    pub fn split_potential(&self, q: f64) -> Option<(f64, f64, f64)> {
        let (u, du, ddu) = self.base.potential(q)?;
        match &self.perturbation {
            None => Some((u, du, ddu)),
            Some(p) => {
                let (v, dv, ddv) = p.potential(q)?;
                let d = self.delta;
                Some((u + d * v, du + d * dv, ddu + d * ddv))
            }
        }
    }

    /// Whether [`split_potential`](Self::split_potential) is available.
    pub fn is_splittable(&self) -> bool {
        self.split_potential(0.0).is_some()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        debug_assert_eq!(x.len(), 2 * d);
        let base = match &self.base {
            BaseModel::Quadratic { matrix } => 0.5 * quad(matrix, x),
            b => {
                let (u, _, _) = b.potential(x[0]).expect("1-D model");
                0.5 * x[1] * x[1] + u
            }
        };
        base + self.delta * self.perturbation_value(x)
    }

    fn perturbation_value(&self, x: &[f64]) -> f64 {
        match &self.perturbation {
            None => 0.0,
            Some(Perturbation::LinearForm { coeffs }) => {
                coeffs.iter().zip(x).map(|(c, v)| c * v).sum()
            }
            Some(Perturbation::QuadraticForm { matrix }) => 0.5 * quad(matrix, x),
            Some(p) => p.potential(x[0]).expect("1-D perturbation").0,
        }
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let d = self.dim();
        let mut g = match &self.base {
            BaseModel::Quadratic { matrix } => matrix * DVector::from_column_slice(x),
            b => {
                let (_, du, _) = b.potential(x[0]).expect("1-D model");
                DVector::from_column_slice(&[du, x[1]])
            }
        };
        match &self.perturbation {
            None => {}
            Some(Perturbation::LinearForm { coeffs }) => g += coeffs * self.delta,
            Some(Perturbation::QuadraticForm { matrix }) => {
                g += matrix * DVector::from_column_slice(x) * self.delta
            }
            Some(p) => {
                let (_, dv, _) = p.potential(x[0]).expect("1-D perturbation");
                g[0] += self.delta * dv;
            }
        }
        debug_assert_eq!(g.len(), 2 * d);
        g
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut h = match &self.base {
            BaseModel::Quadratic { matrix } => matrix.clone(),
            b => {
                let (_, _, ddu) = b.potential(x[0]).expect("1-D model");
                DMatrix::from_row_slice(2, 2, &[ddu, 0.0, 0.0, 1.0])
            }
        };
        match &self.perturbation {
            None | Some(Perturbation::LinearForm { .. }) => {}
            Some(Perturbation::QuadraticForm { matrix }) => h += matrix * self.delta,
            Some(p) => {
                let (_, _, ddv) = p.potential(x[0]).expect("1-D perturbation");
                h[(0, 0)] += self.delta * ddv;
            }
        }
        h
    }
}

fn quad(m: &DMatrix<f64>, x: &[f64]) -> f64 {
    let v = DVector::from_column_slice(x);
    v.dot(&(m * &v))
}

fn check_symmetric_even(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() || m.nrows() == 0 || m.nrows() % 2 != 0 {
        return Err(EchoError::InvalidDimension("quadratic form must be 2d x 2d".into()));
    }
    if (m - m.transpose()).amax() > 1e-14 * (1.0 + m.amax()) {
        return Err(EchoError::InvalidInput("quadratic form must be symmetric".into()));
    }
    Ok(())
}

/// Real phase-space observable `L(X)`.
pub trait Observable: Sync {
    fn value(&self, x: &[f64]) -> f64;
}

impl<F> Observable for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Smooth Gaussian bump of the position, `exp(−(q − center)²/(2 width²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionBump {
    pub center: f64,
    pub width: f64,
}

impl Observable for PositionBump {
    fn value(&self, x: &[f64]) -> f64 {
        let u = (x[0] - self.center) / self.width;
        (-0.5 * u * u).exp()
    }
}
