//! Gaussian states and the metaplectic representation in `ħ = 1` units.
//!
//! Coherent states are `g_X = T̂(X) g` with `g(x) = π^{−d/4} e^{−|x|²/2}` and
//! `T̂(q, p) f(x) = e^{i p·(x − q/2)} f(x − q)`. Metaplectic operators are
//! fixed by continuity along a symplectic path starting at the identity.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra::linalg::Schur;
use num_complex::Complex64;

use crate::error::{EchoError, Result};
use crate::phase::PhaseVector;
use crate::symplectic::{
    branch_sqrt_scalars, build_kf, det_vf_blocks, standard_j, BranchedRoot, ComplexMat, SympMatrix,
};

/// `prefactor · exp(½ i Γ(x − q)·(x − q) + i p·(x − q/2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub center: PhaseVector,
    /// Complex symmetric `d × d` width with positive definite imaginary part.
    pub width: ComplexMat,
    pub prefactor: Complex64,
}

impl GaussianState {
    /// The reference Gaussian `g`.
    pub fn reference(d: usize) -> Self {
        Self {
            center: PhaseVector::zeros(d),
            width: ComplexMat::identity(d, d) * Complex64::i(),
            prefactor: Complex64::new(PI.powf(-0.25 * d as f64), 0.0),
        }
    }

    /// The coherent state `g_X`.
    pub fn coherent(x: &PhaseVector) -> Self {
        Self::reference(x.dim()).translate(x)
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn evaluate(&self, x: &[f64]) -> Complex64 {
        let d = self.dim();
        assert_eq!(x.len(), d);
        let q = self.center.q();
        let p = self.center.p();
        let y: Vec<f64> = x.iter().zip(q).map(|(a, b)| a - b).collect();
        let mut quad = Complex64::new(0.0, 0.0);
        for i in 0..d {
            for k in 0..d {
                quad += self.width[(i, k)] * (y[i] * y[k]);
            }
        }
        let lin: f64 = (0..d).map(|k| p[k] * (x[k] - 0.5 * q[k])).sum();
        self.prefactor * (Complex64::i() * 0.5 * quad + Complex64::new(0.0, lin)).exp()
    }

    /// L² norm from the closed-form Gaussian integral.
    pub fn norm(&self) -> f64 {
        let d = self.dim();
        let im = self.width.map(|c| c.im);
        let det = im.determinant();
        self.prefactor.norm() * (PI.powi(d as i32) / det).powf(0.25)
    }

    /// `T̂(z) ψ`, using `T̂(a)T̂(b) = T̂(a + b) e^{−(i/2)σ(a, b)}`.
    pub fn translate(&self, z: &PhaseVector) -> Self {
        let phase = Complex64::from_polar(1.0, -0.5 * z.sigma(&self.center));
        Self {
            center: PhaseVector::from_vector(&**z + &*self.center),
            width: self.width.clone(),
            prefactor: self.prefactor * phase,
        }
    }

    /// `R̂(F) ψ` up to a sign: width `(C + DΓ)(A + BΓ)⁻¹`, centre `F X`,
    /// principal branch of `det(A + BΓ)^{−1/2}`.
    pub fn transform(&self, f: &SympMatrix) -> Result<Self> {
        let (a, b, c, dd) = f.blocks();
        let cx = |m: &DMatrix<f64>| m.map(|v| Complex64::new(v, 0.0));
        let num = cx(&c) + cx(&dd) * &self.width;
        let den = cx(&a) + cx(&b) * &self.width;
        let inv = den
            .clone()
            .try_inverse()
            .ok_or(EchoError::SingularMatrix("A + B Γ"))?;
        let width = symmetrize(&(num * inv));
        let centered = Self {
            center: PhaseVector::zeros(self.dim()),
            width,
            prefactor: self.prefactor * den.determinant().sqrt().inv(),
        };
        let fx = PhaseVector::from_vector(f.matrix() * &*self.center);
        Ok(centered.translate(&fx))
    }
}

fn symmetrize(m: &ComplexMat) -> ComplexMat {
    (m + m.transpose()) * Complex64::new(0.5, 0.0)
}

/// `⟨g_X, g_Y⟩ = exp(−|X − Y|²/4 + (i/2)σ(X, Y))`.
pub fn gaussian_overlap(x: &PhaseVector, y: &PhaseVector) -> Complex64 {
    assert_eq!(x.dim(), y.dim(), "dimension mismatch");
    let d2 = (&**x - &**y).norm_squared();
    Complex64::new(-0.25 * d2, 0.5 * x.sigma(y)).exp()
}

/// Path `t ↦ P^t U^t`, `t ∈ [0, 1]`, from the identity to `F = P U` (polar
/// decomposition; `P` symmetric positive symplectic, `U` orthosymplectic).
///
/// Eigenvalues `−1` of `U` are rotated through `+π`.
pub fn polar_path(f: &SympMatrix, steps: usize) -> Result<Vec<SympMatrix>> {
    let d = f.dim();
    let m = f.matrix();
    let steps = steps.max(1);
    let eig = SymmetricEigen::new(m * m.transpose());
    let v = &eig.eigenvectors;
    let lam = &eig.eigenvalues;
    if lam.iter().any(|&l| !(l > 0.0)) {
        return Err(EchoError::SingularMatrix("F F^T"));
    }
    let p_pow = |s: f64| {
        let diag = DMatrix::from_diagonal(&lam.map(|l| l.powf(0.5 * s)));
        v * diag * v.transpose()
    };
    let u_mat = p_pow(-1.0) * m;
    // unitary u = A + iB of the orthosymplectic [[A, B], [−B, A]]
    let u = DMatrix::from_fn(d, d, |i, k| Complex64::new(u_mat[(i, k)], u_mat[(i, d + k)]));
    let (w, t) = Schur::new(u).unpack();
    let angles: Vec<f64> = (0..d).map(|k| t[(k, k)].arg()).collect();
    let mut path = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let s = k as f64 / steps as f64;
        let diag = DMatrix::from_diagonal(&DVector::from_iterator(
            d,
            angles.iter().map(|a| Complex64::from_polar(1.0, s * a)),
        ));
        let us = &w * diag * w.adjoint();
        let mut orth = DMatrix::zeros(2 * d, 2 * d);
        for i in 0..d {
            for j in 0..d {
                let c = us[(i, j)];
                orth[(i, j)] = c.re;
                orth[(i, d + j)] = c.im;
                orth[(d + i, j)] = -c.im;
                orth[(d + i, d + j)] = c.re;
            }
        }
        let fs = if k == steps { m.clone() } else { p_pow(s) * orth };
        path.push(SympMatrix::new_unchecked(fs));
    }
    Ok(path)
}

fn check_path(f: &SympMatrix, path: &[SympMatrix]) -> Result<()> {
    let first = path.first().ok_or(EchoError::InvalidInput("empty path".into()))?;
    let last = path.last().expect("non-empty");
    let n = 2 * f.dim();
    if first.dim() != f.dim() || (first.matrix() - DMatrix::identity(n, n)).amax() > 1e-12 {
        return Err(EchoError::InvalidInput("path must start at the identity".into()));
    }
    if (last.matrix() - f.matrix()).amax() > 1e-9 * (1.0 + f.matrix().amax()) {
        return Err(EchoError::InvalidInput("path must end at F".into()));
    }
    Ok(())
}

/// Continues `h(F_s)^{1/2}` along `path`, refining an automatic polar path
/// when no path is supplied.
fn continued_root(
    f: &SympMatrix,
    path: &[SympMatrix],
    h: impl Fn(&SympMatrix) -> Complex64,
) -> Result<BranchedRoot> {
    if !path.is_empty() {
        check_path(f, path)?;
        let dets: Vec<Complex64> = path.iter().map(&h).collect();
        return Ok(*branch_sqrt_scalars(&dets)?.last().expect("non-empty"));
    }
    let mut steps = 32;
    loop {
        let auto = polar_path(f, steps)?;
        let dets: Vec<Complex64> = auto.iter().map(&h).collect();
        match branch_sqrt_scalars(&dets) {
            Ok(r) => return Ok(*r.last().expect("non-empty")),
            Err(EchoError::RefinementRequired { .. }) if steps < 1 << 16 => steps *= 4,
            Err(e) => return Err(e),
        }
    }
}

fn det_a_ib(f: &SympMatrix) -> Complex64 {
    let (a, b, _, _) = f.blocks();
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, k| Complex64::new(a[(i, k)], b[(i, k)])).determinant()
}

/// `R̂(F) g = π^{−d/4} det(A + iB)^{−1/2} exp(½ i Γ x·x)`, `Γ = (C + iD)(A + iB)⁻¹`,
/// with the root continued along `path` (from `I` to `F`). An empty path
/// selects the polar path.
pub fn metaplectic_on_gaussian(f: &SympMatrix, path: &[SympMatrix]) -> Result<GaussianState> {
    let d = f.dim();
    let (a, b, c, dd) = f.blocks();
    let aib = DMatrix::from_fn(d, d, |i, k| Complex64::new(a[(i, k)], b[(i, k)]));
    let cid = DMatrix::from_fn(d, d, |i, k| Complex64::new(c[(i, k)], dd[(i, k)]));
    let inv = aib.try_inverse().ok_or(EchoError::SingularMatrix("A + iB"))?;
    let width = symmetrize(&(cid * inv));
    let root = continued_root(f, path, det_a_ib)?;
    Ok(GaussianState {
        center: PhaseVector::zeros(d),
        width,
        prefactor: root.inverse() * PI.powf(-0.25 * d as f64),
    })
}

/// The metaplectic operator `R̂(F)` on the branch fixed by a path.
#[derive(Debug, Clone)]
pub struct MetaplecticOp {
    f: SympMatrix,
    /// Continued `(det V_F)^{1/2}`.
    root_v: BranchedRoot,
    k: ComplexMat,
    weyl: OnceLock<Result<(DMatrix<f64>, Complex64)>>,
}

impl MetaplecticOp {
    pub fn new(f: &SympMatrix, path: &[SympMatrix]) -> Result<Self> {
        let root_v = continued_root(f, path, det_vf_blocks)?;
        Self::with_root(f, root_v)
    }

    /// Uses a root of `det V_F` continued elsewhere (e.g. along a trajectory).
    pub fn with_root(f: &SympMatrix, root_v: BranchedRoot) -> Result<Self> {
        let k = build_kf(f).map_err(|_| EchoError::Caustic { index: 0 })?;
        Ok(Self {
            f: f.clone(),
            root_v,
            k,
            weyl: OnceLock::new(),
        })
    }

    pub fn symplectic(&self) -> &SympMatrix {
        &self.f
    }

    pub fn root_det_v(&self) -> BranchedRoot {
        self.root_v
    }

    /// `⟨g_{Y+X/2}, R̂(F) g_{Y−X/2}⟩
    ///   = (det V_F)^{−1/2} exp{(K − I)Y·Y − (i/2)σ(X, Y − KY − K̃Y) + ¼ JKJ X·X}`.
    pub fn matrix_element(&self, x: &PhaseVector, y: &PhaseVector) -> Complex64 {
        let n = 2 * self.f.dim();
        assert_eq!(x.len(), n);
        assert_eq!(y.len(), n);
        let j = standard_j(self.f.dim())
            .expect("d >= 1")
            .map(|v| Complex64::new(v, 0.0));
        let k = &self.k;
        let yc = y.map(|v| Complex64::new(v, 0.0));
        let xc = x.map(|v| Complex64::new(v, 0.0));
        let ky = k * &yc;
        let kty = k.transpose() * &yc;
        let term1 = (&ky - &yc).dot(&yc);
        let w = &yc - &ky - &kty;
        // σ(X, W) = X · J W
        let sigma = xc.dot(&(&j * &w));
        let jkj = &j * k * &j;
        let term3 = (&jkj * &xc).dot(&xc) * 0.25;
        self.root_v.inverse() * (term1 - Complex64::new(0.0, 0.5) * sigma + term3).exp()
    }

    /// Weyl symbol of `R̂(F)`:
    /// `(det V_F)^{−1/2} Π_k (1 + iν_k)^{1/2} exp(−i N X·X)` with
    /// `N = J(I − F)(I + F)⁻¹` real symmetric and `ν_k` its eigenvalues.
    /// The magnitude is `2^d |det(I + F)|^{−1/2}`.
    pub fn weyl_symbol(&self, x: &PhaseVector) -> Result<Complex64> {
        let (n_mat, factor) = match self.weyl.get_or_init(|| self.compute_weyl_data()) {
            Ok(data) => data,
            Err(e) => return Err(e.clone()),
        };
        let quad: f64 = x.dot(&(n_mat * &**x));
        Ok(factor * Complex64::from_polar(1.0, -quad))
    }

    /// `(N, constant prefactor)` of [`weyl_symbol`](Self::weyl_symbol).
    pub fn weyl_data(&self) -> Result<(DMatrix<f64>, Complex64)> {
        self.weyl.get_or_init(|| self.compute_weyl_data()).clone()
    }

    fn compute_weyl_data(&self) -> Result<(DMatrix<f64>, Complex64)> {
        let d = self.f.dim();
        let n = 2 * d;
        let id = DMatrix::<f64>::identity(n, n);
        let plus = &id + self.f.matrix();
        if plus.determinant().abs() <= 1e-12 {
            return Err(EchoError::EigenvalueMinusOne);
        }
        let inv = plus.try_inverse().ok_or(EchoError::EigenvalueMinusOne)?;
        let nm = standard_j(d)? * (&id - self.f.matrix()) * inv;
        let nm = (&nm + nm.transpose()) * 0.5;
        let nu = SymmetricEigen::new(nm.clone()).eigenvalues;
        let prod = nu
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, &v| acc * Complex64::new(1.0, v).sqrt());
        Ok((nm, self.root_v.inverse() * prod))
    }
}

/// [`MetaplecticOp::matrix_element`] on the polar-path branch.
pub fn matrix_element(f: &SympMatrix, x: &PhaseVector, y: &PhaseVector) -> Result<Complex64> {
    Ok(MetaplecticOp::new(f, &[])?.matrix_element(x, y))
}

/// [`MetaplecticOp::weyl_symbol`] on the polar-path branch.
pub fn mw_weyl_symbol(f: &SympMatrix, x: &PhaseVector) -> Result<Complex64> {
    MetaplecticOp::new(f, &[])?.weyl_symbol(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::{build_vf, lie_path, random_symmetric, random_symplectic};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Riemann sum on a wide uniform grid; exponentially accurate for Gaussians.
    fn inner_1d(a: impl Fn(f64) -> Complex64, b: impl Fn(f64) -> Complex64) -> Complex64 {
        let (lo, hi, n) = (-25.0, 25.0, 20001);
        let h = (hi - lo) / (n - 1) as f64;
        (0..n)
            .map(|k| {
                let x = lo + k as f64 * h;
                a(x).conj() * b(x)
            })
            .sum::<Complex64>()
            * h
    }

    fn pv(q: f64, p: f64) -> PhaseVector {
        PhaseVector::new(&[q], &[p])
    }

    #[test]
    fn reference_state_and_overlap() {
        let g = metaplectic_on_gaussian(&SympMatrix::identity(1), &[]).unwrap();
        assert!((g.width[(0, 0)] - Complex64::i()).norm() < 1e-14);
        assert!((g.prefactor - PI.powf(-0.25)).norm() < 1e-14);
        assert!((gaussian_overlap(&pv(0.3, 0.2), &pv(0.3, 0.2)) - 1.0).norm() < 1e-15);
        let o = gaussian_overlap(&pv(2.0, 0.0), &pv(0.0, 0.0));
        assert!((o - (-1.0f64).exp()).norm() < 1e-15);
    }

    #[test]
    fn overlap_sign_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let s = random_symmetric(1, &mut rng, 1.5);
            let x = pv(s[(0, 0)], s[(0, 1)]);
            let y = pv(s[(1, 1)], -s[(0, 1)] + 0.3);
            let gx = GaussianState::coherent(&x);
            let gy = GaussianState::coherent(&y);
            let num = inner_1d(|t| gx.evaluate(&[t]), |t| gy.evaluate(&[t]));
            let closed = gaussian_overlap(&x, &y);
            assert!((num - closed).norm() <= 1e-10 + 1e-8 * closed.norm(), "{num} vs {closed}");
        }
    }

    #[test]
    fn rotation_and_squeeze() {
        let theta = 0.9;
        let r = SympMatrix::rotation(theta);
        let path: Vec<_> = (0..=50).map(|k| SympMatrix::rotation(theta * k as f64 / 50.0)).collect();
        let g = metaplectic_on_gaussian(&r, &path).unwrap();
        assert!((g.width[(0, 0)] - Complex64::i()).norm() < 1e-14);
        let phase = g.prefactor / PI.powf(-0.25);
        assert!((phase - Complex64::from_polar(1.0, -theta / 2.0)).norm() < 1e-13);

        let lam = 0.7;
        let sq = metaplectic_on_gaussian(&SympMatrix::squeeze(lam), &[]).unwrap();
        assert!((sq.width[(0, 0)] - Complex64::new(0.0, (-2.0 * lam).exp())).norm() < 1e-13);
        assert!((sq.norm() - 1.0).abs() < 1e-12);
        let grid_norm = inner_1d(|t| sq.evaluate(&[t]), |t| sq.evaluate(&[t])).re.sqrt();
        assert!((grid_norm - 1.0).abs() < 1e-8);
    }

    #[test]
    fn full_rotation_flips_sign() {
        let path: Vec<_> = (0..=200)
            .map(|k| SympMatrix::rotation(2.0 * PI * k as f64 / 200.0))
            .collect();
        let g = metaplectic_on_gaussian(path.last().unwrap(), &path).unwrap();
        assert!((g.prefactor / PI.powf(-0.25) + 1.0).norm() < 1e-10);
    }

    #[test]
    fn composition_of_widths() {
        let f1 = random_symplectic(1, 4, 0.6).unwrap();
        let f2 = random_symplectic(1, 5, 0.6).unwrap();
        let g1 = metaplectic_on_gaussian(&f1, &[]).unwrap();
        let g21 = g1.transform(&f2).unwrap();
        let direct = metaplectic_on_gaussian(&f2.compose(&f1), &[]).unwrap();
        assert!((&g21.width - &direct.width).camax() < 1e-8);
        assert!((g21.prefactor.norm() - direct.prefactor.norm()).abs() < 1e-10);
    }

    fn rg_on_grid(op: &SympMatrix, path: &[SympMatrix], w: &PhaseVector) -> GaussianState {
        // R̂(F) g_W = T̂(F W) R̂(F) g
        let fw = PhaseVector::from_vector(op.matrix() * &**w);
        metaplectic_on_gaussian(op, path).unwrap().translate(&fw)
    }

    #[test]
    fn matrix_element_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for seed in 0..12u64 {
            let s = random_symmetric(1, &mut rng, 0.8);
            let path = lie_path(&s, 200).unwrap();
            let f = path.last().unwrap().clone();
            let op = MetaplecticOp::new(&f, &path).unwrap();
            let x = pv(0.3 * seed as f64 - 1.5, 0.7);
            let y = pv(-0.4, 0.2 * seed as f64 - 1.0);
            let left = GaussianState::coherent(&PhaseVector::from_vector(&*y + &*x * 0.5));
            let right = rg_on_grid(&f, &path, &PhaseVector::from_vector(&*y - &*x * 0.5));
            let num = inner_1d(|t| left.evaluate(&[t]), |t| right.evaluate(&[t]));
            let me = op.matrix_element(&x, &y);
            assert!((num - me).norm() <= 1e-10 + 1e-8 * num.norm(), "seed {seed}: {num} vs {me}");
        }
    }

    #[test]
    fn matrix_element_identity_and_diagonal() {
        let id = SympMatrix::identity(1);
        let op = MetaplecticOp::new(&id, &[]).unwrap();
        assert!((op.matrix_element(&pv(0.0, 0.0), &pv(0.0, 0.0)) - 1.0).norm() < 1e-15);
        let (x, y) = (pv(0.4, -0.8), pv(1.1, 0.3));
        let a = PhaseVector::from_vector(&*y + &*x * 0.5);
        let b = PhaseVector::from_vector(&*y - &*x * 0.5);
        assert!((op.matrix_element(&x, &y) - gaussian_overlap(&a, &b)).norm() < 1e-14);

        let sq = MetaplecticOp::new(&SympMatrix::squeeze(1.0), &[]).unwrap();
        let v = sq.matrix_element(&pv(0.0, 0.0), &pv(0.0, 0.0));
        assert!((v.norm() - 1.0f64.cosh().powf(-0.5)).abs() < 1e-12);
        let f = random_symplectic(2, 8, 0.5).unwrap();
        let op = MetaplecticOp::new(&f, &[]).unwrap();
        let zero = PhaseVector::zeros(2);
        let m = op.matrix_element(&zero, &zero).norm();
        assert!((m - build_vf(&f).determinant().norm().powf(-0.5)).abs() < 1e-10);
    }

    #[test]
    fn weyl_symbol_identity_and_quarter_turn() {
        let op = MetaplecticOp::new(&SympMatrix::identity(1), &[]).unwrap();
        assert!((op.weyl_symbol(&pv(1.3, -0.2)).unwrap() - 1.0).norm() < 1e-14);
        let r = mw_weyl_symbol(&SympMatrix::rotation(PI / 2.0), &pv(0.0, 0.0)).unwrap();
        assert!((r.norm() - 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            mw_weyl_symbol(&SympMatrix::rotation(PI), &pv(0.0, 0.0)),
            Err(EchoError::EigenvalueMinusOne)
        ));
    }

    #[test]
    fn polar_path_is_symplectic_and_ends_at_f() {
        let f = random_symplectic(2, 3, 0.9).unwrap();
        let path = polar_path(&f, 16).unwrap();
        for m in &path {
            assert!(crate::symplectic::symplectic_defect(m.matrix()).unwrap() < 1e-9);
        }
        assert!((path[0].matrix() - DMatrix::identity(4, 4)).amax() < 1e-12);
    }
}
