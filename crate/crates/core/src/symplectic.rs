//! Symplectic and complex matrix algebra.
//!
//! Conventions: phase-space vectors are ordered `(q, p)`, the standard form is
//! `J = [[0, I], [-I, 0]]` and `σ(X, Y) = X · J Y`. For a symplectic `F` the
//! complex matrices
//!
//! ```text
//! V_F = ½ (I + F + iJ (I − F))
//! K_F = (I + F) (2 V_F)⁻¹
//! Γ_F = (I + iJ) K_F (I − iJ) − I
//! ```
//! govern Gaussian overlaps after a linear symplectic flow.

use std::f64::consts::PI;
use std::ops::Deref;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{EchoError, Result};

pub type ComplexMat = DMatrix<Complex64>;

/// Symplecticity tolerance for stability matrices produced by numerical flows.
pub const TOL_SYMP_FLOW: f64 = 1e-8;
/// Symplecticity tolerance for matrices built algebraically.
pub const TOL_SYMP_ALGEBRAIC: f64 = 1e-10;

/// A real `2d × 2d` matrix satisfying `F̃ J F = J` within a tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SympMatrix {
    dim: usize,
    entries: DMatrix<f64>,
}

impl SympMatrix {
    /// Validates `entries` against `tol`.
    pub fn new(entries: DMatrix<f64>, tol: f64) -> Result<Self> {
        let defect = symplectic_defect(&entries)?;
        if defect > tol {
            return Err(EchoError::NotSymplectic { defect, tol });
        }
        Ok(Self {
            dim: entries.nrows() / 2,
            entries,
        })
    }

    /// Wraps without checking. The caller guarantees symplecticity.
    pub fn new_unchecked(entries: DMatrix<f64>) -> Self {
        assert!(entries.is_square() && entries.nrows() % 2 == 0 && entries.nrows() > 0);
        Self {
            dim: entries.nrows() / 2,
            entries,
        }
    }

    pub fn identity(d: usize) -> Self {
        Self::new_unchecked(DMatrix::identity(2 * d, 2 * d))
    }

    /// Planar rotation `[[cos θ, sin θ], [−sin θ, cos θ]]`, the flow of `(q² + p²)/2`.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new_unchecked(DMatrix::from_row_slice(2, 2, &[c, s, -s, c]))
    }

    /// `diag(e^λ, e^{−λ})`.
    pub fn squeeze(lambda: f64) -> Self {
        Self::new_unchecked(DMatrix::from_row_slice(
            2,
            2,
            &[lambda.exp(), 0.0, 0.0, (-lambda).exp()],
        ))
    }

    /// Free-flight shear `[[1, t], [0, 1]]`.
    pub fn shear(t: f64) -> Self {
        Self::new_unchecked(DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// `F⁻¹ = −J F̃ J`, exact for symplectic matrices.
    pub fn inverse(&self) -> SympMatrix {
        let j = standard_j(self.dim).expect("dim >= 1");
        Self::new_unchecked(-(&j * self.entries.transpose() * &j))
    }

    pub fn compose(&self, other: &SympMatrix) -> SympMatrix {
        Self::new_unchecked(&self.entries * &other.entries)
    }

    /// Blocks `(A, B, C, D)` of `F = [[A, B], [C, D]]`.
    pub fn blocks(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let d = self.dim;
        let f = &self.entries;
        (
            f.view((0, 0), (d, d)).into_owned(),
            f.view((0, d), (d, d)).into_owned(),
            f.view((d, 0), (d, d)).into_owned(),
            f.view((d, d), (d, d)).into_owned(),
        )
    }
}

impl Deref for SympMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.entries
    }
}

fn check_even_square(f: &DMatrix<f64>) -> Result<usize> {
    if !f.is_square() || f.nrows() == 0 || f.nrows() % 2 != 0 {
        return Err(EchoError::InvalidDimension(format!(
            "expected even square matrix, got {}x{}",
            f.nrows(),
            f.ncols()
        )));
    }
    Ok(f.nrows() / 2)
}

/// `J = [[0, I_d], [−I_d, 0]]`.
pub fn standard_j(d: usize) -> Result<DMatrix<f64>> {
    if d == 0 {
        return Err(EchoError::InvalidDimension("d must be at least 1".into()));
    }
    let mut j = DMatrix::zeros(2 * d, 2 * d);
    for k in 0..d {
        j[(k, d + k)] = 1.0;
        j[(d + k, k)] = -1.0;
    }
    Ok(j)
}

fn complex_j(d: usize) -> ComplexMat {
    standard_j(d).expect("dim >= 1").map(|x| Complex64::new(x, 0.0))
}

fn to_complex(f: &DMatrix<f64>) -> ComplexMat {
    f.map(|x| Complex64::new(x, 0.0))
}

/// `‖F̃ J F − J‖_max`.
pub fn symplectic_defect(f: &DMatrix<f64>) -> Result<f64> {
    let d = check_even_square(f)?;
    let j = standard_j(d)?;
    Ok((f.transpose() * &j * f - &j).amax())
}

pub fn is_symplectic(f: &DMatrix<f64>, tol: f64) -> Result<bool> {
    Ok(symplectic_defect(f)? <= tol)
}

/// `‖F̃ F − I‖_max`: zero exactly when `F` is orthogonal ("unitary").
pub fn unitarity_defect(f: &DMatrix<f64>) -> f64 {
    let n = f.nrows();
    (f.transpose() * f - DMatrix::<f64>::identity(n, n)).amax()
}

/// Largest eigenvalue `s_F` of `F̃ F`, i.e. the squared operator norm.
pub fn max_stretch(f: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(f.transpose() * f).eigenvalues.max()
}

/// Operator (spectral) norm `‖F‖ = √s_F`.
pub fn operator_norm(f: &DMatrix<f64>) -> f64 {
    max_stretch(f).sqrt()
}

/// Random symmetric `2d × 2d` matrix with entries uniform in `[−scale, scale]`.
pub fn random_symmetric(d: usize, rng: &mut ChaCha8Rng, scale: f64) -> DMatrix<f64> {
    let n = 2 * d;
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in i..n {
            let v = if scale > 0.0 {
                rng.random_range(-scale..=scale)
            } else {
                0.0
            };
            s[(i, k)] = v;
            s[(k, i)] = v;
        }
    }
    s
}

/// Lie-algebra generator `S ↦ exp(J S)`.
pub fn exp_hamiltonian(s: &DMatrix<f64>) -> Result<SympMatrix> {
    let d = check_even_square(s)?;
    if s.is_empty() || (s - s.transpose()).amax() > 1e-14 * (1.0 + s.amax()) {
        return Err(EchoError::InvalidInput("generator must be symmetric".into()));
    }
    let j = standard_j(d)?;
    if s.amax() == 0.0 {
        return Ok(SympMatrix::identity(d));
    }
    Ok(SympMatrix::new_unchecked((j * s).exp()))
}

/// `exp(J S)` for a random symmetric `S` drawn from a ChaCha8 stream seeded by
/// `seed`. `scale` controls how hyperbolic the result can be.
pub fn random_symplectic(d: usize, seed: u64, scale: f64) -> Result<SympMatrix> {
    if d == 0 {
        return Err(EchoError::InvalidDimension("d must be at least 1".into()));
    }
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(EchoError::InvalidInput(format!("scale must be >= 0, got {scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = random_symmetric(d, &mut rng, scale);
    exp_hamiltonian(&s)
}

/// Random orthogonal symplectic matrix: `exp(J S)` with `S` commuting with `J`,
/// i.e. `S = [[A, B], [−B, A]]`, `A` symmetric, `B` antisymmetric.
pub fn random_orthosymplectic(d: usize, seed: u64, scale: f64) -> Result<SympMatrix> {
    if d == 0 {
        return Err(EchoError::InvalidDimension("d must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for k in i..d {
            let a = rng.random_range(-scale..=scale);
            s[(i, k)] = a;
            s[(k, i)] = a;
            s[(d + i, d + k)] = a;
            s[(d + k, d + i)] = a;
            if k > i {
                let b = rng.random_range(-scale..=scale);
                s[(i, d + k)] = b;
                s[(k, d + i)] = -b;
                s[(d + k, i)] = b;
                s[(d + i, k)] = -b;
            }
        }
    }
    exp_hamiltonian(&s)
}

/// Points `exp(s J S)` for `s = 0, 1/steps, …, 1`.
pub fn lie_path(s: &DMatrix<f64>, steps: usize) -> Result<Vec<SympMatrix>> {
    let steps = steps.max(1);
    (0..=steps)
        .map(|k| exp_hamiltonian(&(s * (k as f64 / steps as f64))))
        .collect()
}

/// `V_F = ½(I + F + iJ(I − F))`.
pub fn build_vf(f: &SympMatrix) -> ComplexMat {
    let n = 2 * f.dim();
    let id = ComplexMat::identity(n, n);
    let fc = to_complex(f.matrix());
    let ij = complex_j(f.dim()) * Complex64::i();
    (&id + &fc + ij * (&id - &fc)) * Complex64::new(0.5, 0.0)
}

/// `det V_F` through the block reduction `det ½(A + D + i(B − C))`.
pub fn det_vf_blocks(f: &SympMatrix) -> Complex64 {
    let (a, b, c, d) = f.blocks();
    let m = (to_complex(&(a + d)) + to_complex(&(b - c)) * Complex64::i()) * Complex64::new(0.5, 0.0);
    m.determinant()
}

fn inverse(m: ComplexMat, what: &'static str) -> Result<ComplexMat> {
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let lu = m.lu();
    if lu.determinant().norm() <= 1e-300 * scale.powi(lu.u().nrows() as i32) {
        return Err(EchoError::SingularMatrix(what));
    }
    lu.try_inverse().ok_or(EchoError::SingularMatrix(what))
}

/// `K_F = (I + F)(2 V_F)⁻¹`.
///
/// When `det(I + F) ≠ 0` this coincides with `(I + iJ(I − F)(I + F)⁻¹)⁻¹`.
pub fn build_kf(f: &SympMatrix) -> Result<ComplexMat> {
    let n = 2 * f.dim();
    let two_v = build_vf(f) * Complex64::new(2.0, 0.0);
    let inv = inverse(two_v, "2 V_F")?;
    Ok((ComplexMat::identity(n, n) + to_complex(f.matrix())) * inv)
}

/// `Γ_F = (I + iJ)(I + F)(2V_F)⁻¹(I − iJ) − I`, complex symmetric.
pub fn build_gamma_f(f: &SympMatrix) -> Result<ComplexMat> {
    let n = 2 * f.dim();
    let id = ComplexMat::identity(n, n);
    let ij = complex_j(f.dim()) * Complex64::i();
    let k = build_kf(f)?;
    Ok((&id + &ij) * k * (&id - &ij) - id)
}

/// Complex quadratic form `M X · X` for a real vector.
pub fn quadratic_form(m: &ComplexMat, x: &[f64]) -> Complex64 {
    let n = x.len();
    assert_eq!(m.nrows(), n);
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += m[(i, k)] * (x[i] * x[k]);
        }
    }
    acc
}

/// Square root of a determinant continued along a path from `det = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchedRoot {
    /// `det^{1/2}` on the continued branch.
    pub value: Complex64,
    /// Signed number of half-turns of `arg det` accumulated since the start.
    pub winding: i64,
    /// Continued argument of the determinant.
    pub phase: f64,
}

impl BranchedRoot {
    pub const ONE: BranchedRoot = BranchedRoot {
        value: Complex64 { re: 1.0, im: 0.0 },
        winding: 0,
        phase: 0.0,
    };

    /// `det^{−1/2}` on the same branch.
    pub fn inverse(&self) -> Complex64 {
        self.value.inv()
    }
}

/// Completed half-turns of `phase`, counting values within rounding of a
/// multiple of π as completed.
fn half_turns(phase: f64) -> i64 {
    let w = phase / PI;
    if (w - w.round()).abs() < 1e-9 {
        w.round() as i64
    } else {
        w.trunc() as i64
    }
}

/// Continues `det^{1/2}` along a scalar path starting at 1.
///
/// Consecutive values must satisfy `|d_k / d_{k−1} − 1| < 0.5`.
pub fn branch_sqrt_scalars(dets: &[Complex64]) -> Result<Vec<BranchedRoot>> {
    let mut out = Vec::with_capacity(dets.len());
    let Some(first) = dets.first() else {
        return Ok(out);
    };
    if (first - Complex64::new(1.0, 0.0)).norm() > 1e-9 {
        return Err(EchoError::InvalidInput(format!(
            "continuation path must start at det = 1, got {first}"
        )));
    }
    let mut phase = first.arg();
    let mut prev = *first;
    for (index, &d) in dets.iter().enumerate() {
        if d.norm() <= 1e-12 || !d.norm().is_finite() {
            return Err(EchoError::Caustic { index });
        }
        if index > 0 {
            let ratio = d / prev;
            let step = (ratio - Complex64::new(1.0, 0.0)).norm();
            if step >= 0.5 {
                return Err(EchoError::RefinementRequired { index, step });
            }
            phase += ratio.arg();
        }
        let value = Complex64::from_polar(d.norm().sqrt(), 0.5 * phase);
        out.push(BranchedRoot {
            value,
            winding: half_turns(phase),
            phase,
        });
        prev = d;
    }
    Ok(out)
}

/// Continued `det^{1/2}` for every matrix on `path`; `path[0]` must have
/// `det = 1`. The inverse root `det^{−1/2}` is [`BranchedRoot::inverse`].
pub fn branch_sqrt_det(path: &[ComplexMat]) -> Result<Vec<BranchedRoot>> {
    let dets: Vec<Complex64> = path.iter().map(|m| m.determinant()).collect();
    branch_sqrt_scalars(&dets)
}

/// Continued `(det V_F)^{1/2}` at the end of a symplectic path from `I`.
pub fn sqrt_det_vf_along(path: &[SympMatrix]) -> Result<BranchedRoot> {
    if path.is_empty() {
        return Err(EchoError::InvalidInput("empty path".into()));
    }
    let dets: Vec<Complex64> = path.iter().map(det_vf_blocks).collect();
    Ok(*branch_sqrt_scalars(&dets)?.last().expect("non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn j_shape_and_identities() {
        let j = standard_j(1).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        for d in 1..4 {
            let j = standard_j(d).unwrap();
            let id = DMatrix::<f64>::identity(2 * d, 2 * d);
            assert_eq!(&j * &j, -&id);
            assert_eq!(j.transpose(), -&j);
            assert_eq!(&j * j.transpose(), id);
        }
        assert!(matches!(standard_j(0), Err(EchoError::InvalidDimension(_))));
    }

    #[test]
    fn symplectic_checks() {
        let id = DMatrix::<f64>::identity(2, 2);
        assert!(is_symplectic(&id, 1e-12).unwrap());
        let sq = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        assert!(is_symplectic(&sq, 1e-12).unwrap());
        let dil = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        assert!(!is_symplectic(&dil, 1e-12).unwrap());
        let odd = DMatrix::<f64>::identity(3, 3);
        assert!(matches!(is_symplectic(&odd, 1e-12), Err(EchoError::InvalidDimension(_))));
    }

    #[test]
    fn random_symplectic_contract() {
        assert_eq!(random_symplectic(2, 11, 0.0).unwrap(), SympMatrix::identity(2));
        let a = random_symplectic(3, 42, 0.8).unwrap();
        let b = random_symplectic(3, 42, 0.8).unwrap();
        assert_eq!(a, b);
        let f = random_symplectic(2, 7, 1.0).unwrap();
        assert!(is_symplectic(&f, 1e-10).unwrap());
        let o = random_orthosymplectic(3, 5, 1.0).unwrap();
        assert!(is_symplectic(&o, 1e-10).unwrap());
        assert!(unitarity_defect(&o) < 1e-10);
    }

    #[test]
    fn vf_examples() {
        let v = build_vf(&SympMatrix::identity(1));
        assert_eq!(v, ComplexMat::identity(2, 2));

        let minus = SympMatrix::new_unchecked(-DMatrix::<f64>::identity(2, 2));
        let v = build_vf(&minus);
        let ij = complex_j(1) * Complex64::i();
        assert!((&v - &ij).iter().all(|z| z.norm() < 1e-15));
        assert_relative_eq!(v.determinant().norm(), 1.0, epsilon = 1e-14);

        let v = build_vf(&SympMatrix::squeeze(1.0));
        let det = v.determinant();
        assert_relative_eq!(det.re, 1f64.cosh(), epsilon = 1e-14);
        assert!(det.im.abs() < 1e-14);
    }

    #[test]
    fn kf_examples() {
        let k = build_kf(&SympMatrix::identity(1)).unwrap();
        assert!((k - ComplexMat::identity(2, 2)).iter().all(|z| z.norm() < 1e-15));

        let minus = SympMatrix::new_unchecked(-DMatrix::<f64>::identity(2, 2));
        let k = build_kf(&minus).unwrap();
        assert!(k.iter().all(|z| z.norm() < 1e-15));

        // the inverse form (I + iJ(I − F)(I + F)⁻¹) K_F = I
        let f = random_symplectic(1, 3, 0.7).unwrap();
        let k = build_kf(&f).unwrap();
        let id = ComplexMat::identity(2, 2);
        let fc = to_complex(f.matrix());
        let ij = complex_j(1) * Complex64::i();
        let inv_plus = (&id + &fc).try_inverse().unwrap();
        let m = (&id + ij * (&id - &fc) * inv_plus) * k;
        assert!((m - id).iter().all(|z| z.norm() < 1e-10));
    }

    #[test]
    fn gamma_identity_is_minus_one() {
        let g = build_gamma_f(&SympMatrix::identity(2)).unwrap();
        assert!((g + ComplexMat::identity(4, 4)).iter().all(|z| z.norm() < 1e-15));
        // ¼ Γ X·X = −|X|²/4
        let g = build_gamma_f(&SympMatrix::identity(1)).unwrap();
        let x = [0.3, -1.7];
        let v = quadratic_form(&g, &x) * 0.25;
        assert_relative_eq!(v.re, -(0.09 + 2.89) / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn block_determinant_matches_direct() {
        for seed in 0..50 {
            for d in 1..4 {
                let f = random_symplectic(d, seed, 0.9).unwrap();
                let a = build_vf(&f).determinant();
                let b = det_vf_blocks(&f);
                assert!((a - b).norm() <= 1e-10 * a.norm().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn branch_constant_path() {
        let path = vec![ComplexMat::identity(2, 2); 5];
        let roots = branch_sqrt_det(&path).unwrap();
        assert!(roots.iter().all(|r| r.value == Complex64::new(1.0, 0.0) && r.winding == 0));
    }

    #[test]
    fn branch_full_turn_flips_sign() {
        let dets: Vec<Complex64> = (0..=64)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * k as f64 / 64.0))
            .collect();
        let roots = branch_sqrt_scalars(&dets).unwrap();
        let last = roots.last().unwrap();
        assert!((last.inverse() + Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert_eq!(last.winding, 2);
        for (r, d) in roots.iter().zip(&dets) {
            assert!((r.value * r.value - d).norm() <= 1e-12 * d.norm());
        }
    }

    #[test]
    fn branch_errors() {
        let dets = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        assert_eq!(branch_sqrt_scalars(&dets), Err(EchoError::Caustic { index: 1 }));
        let dets = [Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)];
        assert!(matches!(
            branch_sqrt_scalars(&dets),
            Err(EchoError::RefinementRequired { index: 1, .. })
        ));
    }

    #[test]
    fn harmonic_vf_loop_returns() {
        // V of the harmonic flow is diagonal with det e^{it}: one full lap of
        // θ flips the root.
        let n = 400;
        let path: Vec<ComplexMat> = (0..=n)
            .map(|k| build_vf(&SympMatrix::rotation(2.0 * PI * k as f64 / n as f64)))
            .collect();
        let roots = branch_sqrt_det(&path).unwrap();
        let last = roots.last().unwrap();
        assert!((last.value.re.abs() - 1.0).abs() < 1e-10 && last.value.im.abs() < 1e-10);
        assert_eq!(last.winding, 2);
        assert!((last.value + Complex64::new(1.0, 0.0)).norm() < 1e-10);
    }
}
