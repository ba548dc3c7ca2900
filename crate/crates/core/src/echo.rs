//! Leading-order return amplitude and fidelity from classical data.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{EchoError, Result};
use crate::flow::{displacement, ehrenfest_indicator, evolve, IntegratorOptions, TrajectoryBundle};
use crate::gaussian::MetaplecticOp;
use crate::models::HamiltonianModel;
use crate::phase::PhaseVector;
use crate::symplectic::{build_gamma_f, det_vf_blocks, quadratic_form, unitarity_defect, ComplexMat, SympMatrix};

/// Threshold on `|det V|` below which a time is marked as a caustic.
pub const CAUSTIC_TOL: f64 = 1e-12;

/// Default tolerance of [`revival_condition`].
pub const REVIVAL_TOL: f64 = 1e-6;

/// Time series of a return amplitude or fidelity.
///
/// For semiclassical series every column has one entry per time. Series from
/// the exact oracle carry only `times` and `values`; the other columns are
/// empty.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoSeries {
    pub times: Vec<f64>,
    /// `NaN` at caustic-marked times.
    pub values: Vec<f64>,
    /// `|det V|^{−1/2}` (return amplitude) or `|det V_F|^{−1}` (fidelity).
    pub prefactors: Vec<f64>,
    /// Real exponent (already divided by ħ).
    pub exponents: Vec<f64>,
    /// Classical phase in units of `1/ħ`: `γ_t` for the return amplitude,
    /// `β_t + γ_t^δ − γ_t^0` for the fidelity.
    pub phases: Vec<f64>,
    /// Ehrenfest advisory flags.
    pub flags: Vec<bool>,
    pub caustic: Vec<bool>,
    /// `√ħ ‖F‖³ (1 + |t|)`, the shape of the neglected remainder.
    pub error_budget: Vec<f64>,
}

impl EchoSeries {
    pub fn exact(times: Vec<f64>, values: Vec<f64>) -> Self {
        Self {
            times,
            values,
            prefactors: Vec::new(),
            exponents: Vec::new(),
            phases: Vec::new(),
            flags: Vec::new(),
            caustic: Vec::new(),
            error_budget: Vec::new(),
        }
    }

    fn with_capacity(times: &[f64]) -> Self {
        let n = times.len();
        Self {
            times: times.to_vec(),
            values: Vec::with_capacity(n),
            prefactors: Vec::with_capacity(n),
            exponents: Vec::with_capacity(n),
            phases: Vec::with_capacity(n),
            flags: Vec::with_capacity(n),
            caustic: Vec::with_capacity(n),
            error_budget: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `max_k |self_k − other_k|` over times where both are finite.
    pub fn max_abs_diff(&self, other: &EchoSeries) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `Λ = ¼ F̃₀⁻¹ Γ_F F₀⁻¹`.
pub fn lambda_matrix(f0: &SympMatrix, f: &SympMatrix) -> Result<ComplexMat> {
    let gamma = build_gamma_f(f).map_err(|_| EchoError::Caustic { index: 0 })?;
    let inv = f0.inverse();
    let inv_c = inv.matrix().map(|v| Complex64::new(v, 0.0));
    Ok(inv_c.transpose() * gamma * inv_c * Complex64::new(0.25, 0.0))
}

/// `β = −½ σ(z_δ, z₀)`.
pub fn beta_phase(zt_delta: &PhaseVector, zt_0: &PhaseVector) -> f64 {
    -0.5 * zt_delta.sigma(zt_0)
}

fn check_hbar(hbar: f64) -> Result<()> {
    if !(hbar > 0.0) || !hbar.is_finite() {
        return Err(EchoError::InvalidInput(format!("hbar must be > 0, got {hbar}")));
    }
    Ok(())
}

/// Leading-order return amplitude
/// `r(t, z) = |det V_t|^{−1/2} exp(Re ¼Γ_{F_t}(z_t − z)·(z_t − z) / ħ)`.
pub fn return_amplitude(
    model: &HamiltonianModel,
    z: &PhaseVector,
    times: &[f64],
    hbar: f64,
) -> Result<EchoSeries> {
    return_amplitude_with(model, z, times, hbar, &IntegratorOptions::default())
}

pub fn return_amplitude_with(
    model: &HamiltonianModel,
    z: &PhaseVector,
    times: &[f64],
    hbar: f64,
    opts: &IntegratorOptions,
) -> Result<EchoSeries> {
    check_hbar(hbar)?;
    let bundle = evolve(model, z, times, opts)?;
    Ok(return_from_bundle(&bundle, z, hbar))
}

fn return_from_bundle(bundle: &TrajectoryBundle, z: &PhaseVector, hbar: f64) -> EchoSeries {
    let mut out = EchoSeries::with_capacity(&bundle.times);
    for (k, &t) in bundle.times.iter().enumerate() {
        let f = &bundle.stability[k];
        let det = det_vf_blocks(f).norm();
        let budget = ehrenfest_indicator(hbar, f, t);
        out.error_budget.push(budget);
        out.flags.push(budget > 1.0);
        out.phases.push(bundle.action[k]);
        if det <= CAUSTIC_TOL {
            out.caustic.push(true);
            out.prefactors.push(f64::NAN);
            out.exponents.push(f64::NAN);
            out.values.push(f64::NAN);
            continue;
        }
        let gamma = build_gamma_f(f).expect("det V nonzero");
        let dz = displacement(&bundle.points[k], z);
        let expo = 0.25 * quadratic_form(&gamma, dz.as_slice()).re / hbar;
        let pre = det.powf(-0.5);
        out.caustic.push(false);
        out.prefactors.push(pre);
        out.exponents.push(expo);
        out.values.push(if k == 0 { 1.0 } else { pre * expo.exp() });
    }
    out
}

/// Leading-order complex overlap `⟨φ_z, U(t)φ_z⟩` including the action phase
/// `e^{iγ_t/ħ}` and the metaplectic branch continued along the trajectory.
///
/// The time grid is refined internally until the branch continuation is
/// resolved.
pub fn return_overlap(
    model: &HamiltonianModel,
    z: &PhaseVector,
    times: &[f64],
    hbar: f64,
) -> Result<Vec<Complex64>> {
    check_hbar(hbar)?;
    let opts = IntegratorOptions::default();
    let mut refine = 8usize;
    loop {
        let fine = refine_grid(times, refine);
        let bundle = evolve(model, z, &fine, &opts)?;
        match overlaps_on(&bundle, z, hbar, refine) {
            Ok(v) => return Ok(v),
            Err(EchoError::RefinementRequired { .. }) if refine < 4096 => refine *= 4,
            Err(e) => return Err(e),
        }
    }
}

fn refine_grid(times: &[f64], factor: usize) -> Vec<f64> {
    let mut out = vec![times[0]];
    for w in times.windows(2) {
        for j in 1..=factor {
            out.push(w[0] + (w[1] - w[0]) * j as f64 / factor as f64);
        }
    }
    out
}

fn overlaps_on(
    bundle: &TrajectoryBundle,
    z: &PhaseVector,
    hbar: f64,
    factor: usize,
) -> Result<Vec<Complex64>> {
    let dets: Vec<Complex64> = bundle.stability.iter().map(det_vf_blocks).collect();
    let roots = crate::symplectic::branch_sqrt_scalars(&dets)?;
    let s = hbar.sqrt();
    let zs = PhaseVector::from_vector(&**z / s);
    let mut out = Vec::new();
    for k in (0..bundle.times.len()).step_by(factor) {
        let f = &bundle.stability[k];
        let op = MetaplecticOp::with_root(f, roots[k])?;
        let zt = PhaseVector::from_vector(&*bundle.points[k] / s);
        // ⟨g_{z'}, T̂(z_t') R̂ g⟩ = e^{(i/2)σ(z', z_t')} ⟨g, R̂ g_{F⁻¹(z_t' − z')}⟩
        let w = PhaseVector::from_vector(f.inverse().matrix() * (&*zt - &*zs));
        let x = PhaseVector::from_vector(-&*w);
        let y = PhaseVector::from_vector(&*w * 0.5);
        let me = op.matrix_element(&x, &y);
        let phase = Complex64::from_polar(1.0, 0.5 * zs.sigma(&zt) + bundle.action[k] / hbar);
        out.push(me * phase);
    }
    Ok(out)
}

/// Leading-order fidelity
/// `f = |det V_F|⁻¹ exp((2/ħ) Re Λ Δz·Δz)` with `F = F₀⁻¹F_δ`, `Δz = z_t^δ − z_t^0`.
pub fn fidelity_leading(
    model0: &HamiltonianModel,
    model_delta: &HamiltonianModel,
    z: &PhaseVector,
    times: &[f64],
    hbar: f64,
) -> Result<EchoSeries> {
    fidelity_leading_with(model0, model_delta, z, times, hbar, &IntegratorOptions::default())
}

pub fn fidelity_leading_with(
    model0: &HamiltonianModel,
    model_delta: &HamiltonianModel,
    z: &PhaseVector,
    times: &[f64],
    hbar: f64,
    opts: &IntegratorOptions,
) -> Result<EchoSeries> {
    check_hbar(hbar)?;
    let b0 = evolve(model0, z, times, opts)?;
    let bd = evolve(model_delta, z, times, opts)?;
    let mut out = EchoSeries::with_capacity(times);
    for (k, &t) in times.iter().enumerate() {
        let f0 = &b0.stability[k];
        let fd = &bd.stability[k];
        let f = SympMatrix::new_unchecked(f0.inverse().matrix() * fd.matrix());
        let budget = ehrenfest_indicator(hbar, f0, t).max(ehrenfest_indicator(hbar, fd, t));
        out.error_budget.push(budget);
        out.flags.push(budget > 1.0);
        let (zd, z0) = (&bd.points[k], &b0.points[k]);
        out.phases.push(beta_phase(zd, z0) + bd.action[k] - b0.action[k]);
        let det = det_vf_blocks(&f).norm();
        if det <= CAUSTIC_TOL {
            out.caustic.push(true);
            out.prefactors.push(f64::NAN);
            out.exponents.push(f64::NAN);
            out.values.push(f64::NAN);
            continue;
        }
        let lambda = lambda_matrix(f0, &f)?;
        let dz = displacement(zd, z0);
        let expo = 2.0 / hbar * quadratic_form(&lambda, dz.as_slice()).re;
        let pre = 1.0 / det;
        out.caustic.push(false);
        out.prefactors.push(pre);
        out.exponents.push(expo);
        out.values.push(if k == 0 { 1.0 } else { pre * expo.exp() });
    }
    Ok(out)
}

/// Outcome of [`revival_condition`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RevivalReport {
    pub holds: bool,
    /// `|z_t^δ − z_t^0|`.
    pub displacement: f64,
    /// `‖F̃F − I‖_max` with `F = F₀⁻¹F_δ`.
    pub unitarity_defect: f64,
}

/// Whether the fidelity tends to 1: `z_t^δ = z_t^0` and `F₀⁻¹F_δ` orthogonal,
/// both within `tol`.
pub fn revival_condition(
    f0: &SympMatrix,
    f_delta: &SympMatrix,
    zt_delta: &PhaseVector,
    zt_0: &PhaseVector,
    tol: f64,
) -> RevivalReport {
    let f: DMatrix<f64> = f0.inverse().matrix() * f_delta.matrix();
    let disp = displacement(zt_delta, zt_0).norm();
    let defect = unitarity_defect(&f);
    RevivalReport {
        holds: disp <= tol && defect <= tol,
        displacement: disp,
        unitarity_defect: defect,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::uniform_times;
    use crate::models::Perturbation;
    use crate::symplectic::{max_stretch, random_symplectic};
    use std::f64::consts::PI;

    #[test]
    fn lambda_examples() {
        let id = SympMatrix::identity(1);
        let l = lambda_matrix(&id, &id).unwrap();
        assert!((l - ComplexMat::identity(2, 2) * Complex64::new(-0.25, 0.0)).camax() < 1e-14);
        let l = lambda_matrix(&SympMatrix::rotation(0.7), &id).unwrap();
        assert!((l - ComplexMat::identity(2, 2) * Complex64::new(-0.25, 0.0)).camax() < 1e-14);
    }

    #[test]
    fn beta_examples() {
        let a = PhaseVector::new(&[1.0], &[0.0]);
        let b = PhaseVector::new(&[0.0], &[1.0]);
        assert_eq!(beta_phase(&a, &a), 0.0);
        assert_eq!(beta_phase(&a, &b), -0.5);
        assert_eq!(beta_phase(&b, &a), 0.5);
    }

    #[test]
    fn return_amplitude_harmonic_revival() {
        let m = HamiltonianModel::harmonic(1.0);
        let z = PhaseVector::new(&[1.2], &[-0.7]);
        let r = return_amplitude(&m, &z, &[0.0, 1.0, 2.0 * PI], 0.01).unwrap();
        assert_eq!(r.values[0], 1.0);
        assert!((r.values[2] - 1.0).abs() < 1e-8);
        assert!(r.values[1] < 1e-3);
    }

    #[test]
    fn return_overlap_phase_for_oscillator() {
        // U(t) φ_z = e^{−it/2} φ_{z_t} for the unit oscillator
        let m = HamiltonianModel::harmonic(1.0);
        let hbar = 0.1;
        let z = PhaseVector::new(&[0.5], &[0.2]);
        let t = 2.0 * PI;
        let o = return_overlap(&m, &z, &[0.0, t], hbar).unwrap();
        assert!((o[0] - 1.0).norm() < 1e-12);
        assert!((o[1] + 1.0).norm() < 1e-8, "{}", o[1]);
    }

    #[test]
    fn fidelity_displaced_oscillator() {
        let h0 = HamiltonianModel::harmonic(1.0);
        let delta = 0.05;
        let hd = h0.clone().with_perturbation(Perturbation::Linear, delta).unwrap();
        let z = PhaseVector::new(&[1.0], &[0.0]);
        let hbar = 0.01;
        let times = uniform_times(4.0 * PI, 41);
        let f = fidelity_leading(&h0, &hd, &z, &times, hbar).unwrap();
        for (t, v) in times.iter().zip(&f.values) {
            let exact = (-2.0 * delta * delta * (t / 2.0).sin().powi(2) / hbar).exp();
            assert!((v - exact).abs() < 1e-9, "t={t}: {v} vs {exact}");
        }
        assert!(f.exponents.iter().all(|e| *e <= 1e-14));
        let same = fidelity_leading(&h0, &h0, &z, &times, hbar).unwrap();
        assert!(same.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn lambda_bound() {
        for seed in 0..50 {
            let f0 = random_symplectic(1, seed, 0.7).unwrap();
            let f = random_symplectic(1, 1000 + seed, 0.7).unwrap();
            let l = lambda_matrix(&f0, &f).unwrap();
            let inv = f0.inverse();
            let g = inv.matrix().transpose() * inv.matrix();
            let s = max_stretch(f.matrix());
            for k in 0..4 {
                let x = [((seed + k) as f64).sin(), ((3 * seed + k) as f64).cos()];
                let lhs = quadratic_form(&l, &x).re;
                let rhs = -(x[0] * (g[(0, 0)] * x[0] + g[(0, 1)] * x[1])
                    + x[1] * (g[(1, 0)] * x[0] + g[(1, 1)] * x[1]))
                    / (2.0 + 2.0 * s);
                assert!(lhs <= rhs + 1e-10, "seed {seed}: {lhs} > {rhs}");
            }
        }
    }

    #[test]
    fn revival_examples() {
        let id = SympMatrix::identity(1);
        let z = PhaseVector::new(&[0.3], &[0.1]);
        let r = revival_condition(&id, &id, &z, &z, REVIVAL_TOL);
        assert!(r.holds && r.displacement == 0.0 && r.unitarity_defect == 0.0);
        let r = revival_condition(&id, &SympMatrix::shear(0.8), &z, &z, REVIVAL_TOL);
        assert!(!r.holds && r.unitarity_defect > 0.1);

        let h0 = HamiltonianModel::harmonic(1.0);
        let hd = h0.clone().with_perturbation(Perturbation::Linear, 0.1).unwrap();
        let opts = IntegratorOptions::default();
        let t = [0.0, 2.0 * PI];
        let b0 = evolve(&h0, &z, &t, &opts).unwrap();
        let bd = evolve(&hd, &z, &t, &opts).unwrap();
        let r = revival_condition(
            b0.final_stability(),
            bd.final_stability(),
            bd.final_point(),
            b0.final_point(),
            REVIVAL_TOL,
        );
        assert!(r.holds, "{r:?}");
    }
}
