//! Hamiltonian flow, stability matrix and action phase.
//!
//! The state `(z, F, γ)` is integrated jointly with an adaptive
//! Dormand–Prince 5(4) pair:
//!
//! ```text
//! ż = J ∇H(z)
//! Ḟ = J H''(z) F,            F(0) = I
//! γ̇ = ½ z · ∇H(z) − H(z₀),   γ(0) = 0
//! ```
//!
//! Symplecticity of `F` and conservation of `H` are monitored, not enforced.

use nalgebra::{DMatrix, DVector};

use crate::error::{EchoError, Result};
use crate::models::{HamiltonianModel, Observable};
use crate::oracle::{self, OracleConfig};
use crate::phase::PhaseVector;
use crate::symplectic::{operator_norm, standard_j, symplectic_defect, SympMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest admissible step before the integration is declared failed.
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-13,
            atol: 1e-14,
            h_min: 1e-12,
            max_steps: 20_000_000,
        }
    }
}

/// Trajectory data sampled on a time grid.
#[derive(Debug, Clone)]
pub struct TrajectoryBundle {
    pub times: Vec<f64>,
    pub points: Vec<PhaseVector>,
    pub stability: Vec<SympMatrix>,
    pub action: Vec<f64>,
    pub energy: Vec<f64>,
    /// `ln ‖F_T‖ / |T|` at the final time.
    pub lyapunov_estimate: f64,
    pub steps: usize,
}

impl TrajectoryBundle {
    pub fn final_point(&self) -> &PhaseVector {
        self.points.last().expect("non-empty bundle")
    }

    pub fn final_stability(&self) -> &SympMatrix {
        self.stability.last().expect("non-empty bundle")
    }

    /// `max_t ‖F̃_t J F_t − J‖_max`.
    pub fn max_symplectic_defect(&self) -> f64 {
        self.stability
            .iter()
            .map(|f| symplectic_defect(f).expect("square"))
            .fold(0.0, f64::max)
    }

    /// `max_t |H(z_t) − H(z₀)|`.
    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.energy[0];
        self.energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max)
    }
}

struct FlowSystem<'a> {
    model: &'a HamiltonianModel,
    j: DMatrix<f64>,
    d: usize,
    h0: f64,
}

impl FlowSystem<'_> {
    fn len(&self) -> usize {
        let n = 2 * self.d;
        n + n * n + 1
    }

    fn rhs(&self, y: &[f64], out: &mut [f64]) -> bool {
        let n = 2 * self.d;
        let z = &y[..n];
        let grad = self.model.gradient(z);
        let hess = self.model.hessian(z);
        let jg = &self.j * &grad;
        out[..n].copy_from_slice(jg.as_slice());
        let f = DMatrix::from_column_slice(n, n, &y[n..n + n * n]);
        let df = &self.j * hess * f;
        out[n..n + n * n].copy_from_slice(df.as_slice());
        let zg: f64 = z.iter().zip(grad.iter()).map(|(a, b)| a * b).sum();
        out[n + n * n] = 0.5 * zg - self.h0;
        out.iter().all(|v| v.is_finite())
    }
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `(z, F, γ)` and samples it on `times`.
///
/// `times[0]` must be 0 and the grid strictly monotone (increasing for the
/// forward flow, decreasing for the backward flow).
pub fn evolve(
    model: &HamiltonianModel,
    z0: &PhaseVector,
    times: &[f64],
    opts: &IntegratorOptions,
) -> Result<TrajectoryBundle> {
    let d = model.dim();
    if z0.dim() != d {
        return Err(EchoError::InvalidDimension(format!(
            "initial point has d = {}, model has d = {d}",
            z0.dim()
        )));
    }
    validate_times(times)?;
    let n = 2 * d;
    let h0 = model.value(z0.as_slice());
    if !h0.is_finite() {
        return Err(EchoError::ModelEvaluation { time: 0.0 });
    }
    let sys = FlowSystem {
        model,
        j: standard_j(d)?,
        d,
        h0,
    };
    let len = sys.len();
    let mut y = vec![0.0; len];
    y[..n].copy_from_slice(z0.as_slice());
    for k in 0..n {
        y[n + k * n + k] = 1.0;
    }

    let mut bundle = TrajectoryBundle {
        times: times.to_vec(),
        points: Vec::with_capacity(times.len()),
        stability: Vec::with_capacity(times.len()),
        action: Vec::with_capacity(times.len()),
        energy: Vec::with_capacity(times.len()),
        lyapunov_estimate: 0.0,
        steps: 0,
    };
    let record = |y: &[f64], bundle: &mut TrajectoryBundle| {
        let z = PhaseVector::from_slice(&y[..n]);
        bundle.energy.push(model.value(z.as_slice()));
        bundle.points.push(z);
        bundle
            .stability
            .push(SympMatrix::new_unchecked(DMatrix::from_column_slice(n, n, &y[n..n + n * n])));
        bundle.action.push(y[n + n * n]);
    };
    record(&y, &mut bundle);

    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; len]);
    let mut stage = vec![0.0; len];
    let mut y5 = vec![0.0; len];
    let mut t = 0.0;
    if !sys.rhs(&y, &mut k[0]) {
        return Err(EchoError::ModelEvaluation { time: 0.0 });
    }
    let span = times.last().copied().unwrap_or(0.0);
    let dir = if span < 0.0 { -1.0 } else { 1.0 };
    let mut h = initial_step(&y, &k[0], opts, span.abs());

    for &target in &times[1..] {
        while (target - t) * dir > 0.0 {
            if bundle.steps >= opts.max_steps {
                return Err(EchoError::IntegrationFailure {
                    time: t,
                    reason: "maximum number of steps exceeded".into(),
                });
            }
            let remaining = (target - t).abs();
            let last = h >= remaining;
            let step = if last { remaining } else { h };
            let hs = dir * step;
            // stages 2..7
            for s in 1..7 {
                for i in 0..len {
                    let mut acc = y[i];
                    for (r, a) in A[s][..s].iter().enumerate() {
                        acc += hs * a * k[r][i];
                    }
                    stage[i] = acc;
                }
                if !sys.rhs(&stage, &mut k[s]) {
                    return Err(EchoError::ModelEvaluation { time: t + C[s] * hs });
                }
            }
            let mut err = 0.0;
            for i in 0..len {
                let mut s5 = 0.0;
                let mut s4 = 0.0;
                for r in 0..7 {
                    s5 += B5[r] * k[r][i];
                    s4 += B4[r] * k[r][i];
                }
                y5[i] = y[i] + hs * s5;
                let sc = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
                let e = hs * (s5 - s4) / sc;
                err += e * e;
            }
            let err = (err / len as f64).sqrt();
            if !err.is_finite() {
                return Err(EchoError::ModelEvaluation { time: t });
            }
            if err <= 1.0 {
                t = if last { target } else { t + hs };
                std::mem::swap(&mut y, &mut y5);
                // FSAL: the seventh stage is the derivative at the new point
                let (first, rest) = k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
                bundle.steps += 1;
                let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last || fac < 1.0 {
                    h = step * fac;
                }
            } else {
                h = step * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if h < opts.h_min {
                    return Err(EchoError::IntegrationFailure {
                        time: t,
                        reason: format!("step size underflow (h = {h:.3e})"),
                    });
                }
            }
        }
        record(&y, &mut bundle);
    }
    if span != 0.0 {
        let norm = operator_norm(bundle.final_stability());
        bundle.lyapunov_estimate = norm.ln() / span.abs();
    }
    Ok(bundle)
}

fn initial_step(y: &[f64], f0: &[f64], opts: &IntegratorOptions, span: f64) -> f64 {
    let mut d0: f64 = 0.0;
    let mut d1: f64 = 0.0;
    for (a, b) in y.iter().zip(f0) {
        let sc = opts.atol + opts.rtol * a.abs();
        d0 += (a / sc).powi(2);
        d1 += (b / sc).powi(2);
    }
    let h = if d0 < 1e-10 || d1 < 1e-10 {
        1e-6
    } else {
        0.01 * (d0 / d1).sqrt()
    };
    let h = h.min(0.05);
    if span > 0.0 {
        h.min(span)
    } else {
        h
    }
}

fn validate_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(EchoError::InvalidInput("time grid is empty".into()));
    }
    if times[0] != 0.0 {
        return Err(EchoError::InvalidInput("time grid must start at 0".into()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(EchoError::InvalidInput("time grid contains non-finite values".into()));
    }
    if times.len() > 1 {
        let dir = (times[1] - times[0]).signum();
        if dir == 0.0 || times.windows(2).any(|w| (w[1] - w[0]).signum() != dir) {
            return Err(EchoError::InvalidInput("time grid must be strictly monotone".into()));
        }
    }
    Ok(())
}

/// Uniform grid `0, t_max/(n−1), …, t_max`.
pub fn uniform_times(t_max: f64, n_samples: usize) -> Vec<f64> {
    if n_samples <= 1 {
        return vec![0.0];
    }
    (0..n_samples)
        .map(|k| t_max * k as f64 / (n_samples - 1) as f64)
        .collect()
}

/// Classical echo `φ₀^{−t} ∘ φ_δ^t (X)`.
pub fn classical_echo(
    model0: &HamiltonianModel,
    model_delta: &HamiltonianModel,
    x: &PhaseVector,
    t: f64,
    opts: &IntegratorOptions,
) -> Result<PhaseVector> {
    if t == 0.0 {
        return Ok(x.clone());
    }
    let forward = evolve(model_delta, x, &[0.0, t], opts)?;
    let back = evolve(model0, forward.final_point(), &[0.0, -t], opts)?;
    Ok(back.final_point().clone())
}

/// `|⟨E_δ(t)φ_z, L̂ E_δ(t)φ_z⟩ − L(E_δ^{cl}(t, z))|` with the quantum echo
/// `E_δ(t) = U₀(−t) U_δ(t)` evaluated on the grid oracle (one dimension).
pub fn egorov_defect(
    model0: &HamiltonianModel,
    model_delta: &HamiltonianModel,
    observable: &dyn Observable,
    z: &PhaseVector,
    t: f64,
    hbar: f64,
    oracle_cfg: &OracleConfig,
    opts: &IntegratorOptions,
) -> Result<f64> {
    let classical = classical_echo(model0, model_delta, z, t, opts)?;
    let classical_value = observable.value(classical.as_slice());
    let quantum = oracle::echo_expectation(model0, model_delta, observable, z, t, hbar, oracle_cfg)?;
    Ok((quantum - classical_value).abs())
}

/// `√ħ ‖F_t‖³ (1 + |t|)`: the size of the leading remainder of the coherent
/// state propagation; values above 1 mark the Ehrenfest regime.
pub fn ehrenfest_indicator(hbar: f64, stability: &DMatrix<f64>, t: f64) -> f64 {
    hbar.sqrt() * operator_norm(stability).powi(3) * (1.0 + t.abs())
}

/// Displacement `z_δ − z₀` as a plain vector.
pub fn displacement(a: &PhaseVector, b: &PhaseVector) -> DVector<f64> {
    &**a - &**b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Perturbation;
    use std::f64::consts::PI;

    #[test]
    fn harmonic_quarter_turn() {
        let model = HamiltonianModel::harmonic(1.0);
        let z0 = PhaseVector::new(&[1.0], &[0.0]);
        let b = evolve(&model, &z0, &[0.0, PI / 2.0], &IntegratorOptions::default()).unwrap();
        let z = b.final_point();
        assert!((z[0] - 0.0).abs() < 1e-11 && (z[1] + 1.0).abs() < 1e-11, "{z:?}");
        let rot = SympMatrix::rotation(PI / 2.0);
        assert!((b.final_stability().matrix() - rot.matrix()).amax() < 1e-11);
        assert_eq!(b.stability[0], SympMatrix::identity(1));
        assert_eq!(b.action[0], 0.0);
    }

    #[test]
    fn harmonic_action_vanishes() {
        let model = HamiltonianModel::harmonic(1.0);
        let z0 = PhaseVector::new(&[0.7], &[-1.2]);
        let b = evolve(&model, &z0, &uniform_times(9.0, 10), &IntegratorOptions::default()).unwrap();
        assert!(b.action.iter().all(|g| g.abs() < 1e-11));
    }

    #[test]
    fn quartic_conservation() {
        let model = HamiltonianModel::quartic();
        let z0 = PhaseVector::new(&[1.0], &[0.0]);
        let b = evolve(&model, &z0, &uniform_times(20.0, 201), &IntegratorOptions::default()).unwrap();
        assert!(b.max_energy_drift() <= 1e-9, "{}", b.max_energy_drift());
        assert!(b.max_symplectic_defect() <= 1e-8, "{}", b.max_symplectic_defect());
    }

    #[test]
    fn composition_and_action_additivity() {
        let model = HamiltonianModel::pendulum();
        let z0 = PhaseVector::new(&[0.4], &[0.9]);
        let opts = IntegratorOptions::default();
        let (t1, t2) = (1.3, 2.1);
        let full = evolve(&model, &z0, &[0.0, t1, t1 + t2], &opts).unwrap();
        let first = evolve(&model, &z0, &[0.0, t1], &opts).unwrap();
        let second = evolve(&model, first.final_point(), &[0.0, t2], &opts).unwrap();
        let d = displacement(full.final_point(), second.final_point()).amax();
        assert!(d < 1e-8);
        // F composes, γ adds up to the energy-reference shift which vanishes
        // because H is conserved along the same trajectory.
        let comp = second.final_stability().matrix() * first.final_stability().matrix();
        assert!((comp - full.final_stability().matrix()).amax() < 1e-8);
        let gamma = first.action[1] + second.action[1];
        assert!((gamma - full.action[2]).abs() < 1e-8);
    }

    #[test]
    fn backward_flow_inverts_forward() {
        let model = HamiltonianModel::double_well();
        let z0 = PhaseVector::new(&[1.0], &[0.5]);
        let opts = IntegratorOptions::default();
        let fwd = evolve(&model, &z0, &[0.0, 3.0], &opts).unwrap();
        let back = evolve(&model, fwd.final_point(), &[0.0, -3.0], &opts).unwrap();
        assert!(displacement(back.final_point(), &z0).amax() < 1e-9);
    }

    #[test]
    fn classical_echo_cases() {
        let opts = IntegratorOptions::default();
        let h0 = HamiltonianModel::harmonic(1.0);
        let x = PhaseVector::new(&[1.0], &[0.0]);
        let same = classical_echo(&h0, &h0, &x, 4.0, &opts).unwrap();
        assert!(displacement(&same, &x).amax() < 1e-10);
        let hd = h0.clone().with_perturbation(Perturbation::Linear, 0.1).unwrap();
        assert_eq!(classical_echo(&h0, &hd, &x, 0.0, &opts).unwrap(), x);
        // rotation about (−δ, 0) for time π then about the origin backwards:
        // (1, 0) ↦ (−1.2, 0) ↦ (1.2, 0)
        let e = classical_echo(&h0, &hd, &x, PI, &opts).unwrap();
        assert!((e[0] - 1.2).abs() < 1e-10 && e[1].abs() < 1e-10, "{e:?}");
        assert!((displacement(&e, &x).norm() - 0.2).abs() < 1e-10);
    }

    #[test]
    fn bad_grids() {
        let model = HamiltonianModel::harmonic(1.0);
        let z0 = PhaseVector::new(&[1.0], &[0.0]);
        let opts = IntegratorOptions::default();
        assert!(evolve(&model, &z0, &[0.1, 1.0], &opts).is_err());
        assert!(evolve(&model, &z0, &[0.0, 1.0, 0.5], &opts).is_err());
        let z2 = PhaseVector::new(&[1.0, 0.0], &[0.0, 0.0]);
        assert!(matches!(
            evolve(&model, &z2, &[0.0, 1.0], &opts),
            Err(EchoError::InvalidDimension(_))
        ));
    }

    #[test]
    fn blow_up_is_reported() {
        // ṗ = −4q³ with q₀ = 1: confining, fine. An inverted quartic escapes
        // to infinity in finite time.
        let m = HamiltonianModel::quartic()
            .with_perturbation(Perturbation::Quadratic, 0.0)
            .unwrap();
        assert!(evolve(&m, &PhaseVector::new(&[1.0], &[0.0]), &[0.0, 1.0], &IntegratorOptions::default()).is_ok());
        let inverted = HamiltonianModel::new(crate::models::BaseModel::Anharmonic { alpha: -1.0 }).unwrap();
        let r = evolve(
            &inverted,
            &PhaseVector::new(&[2.0], &[1.0]),
            &[0.0, 50.0],
            &IntegratorOptions::default(),
        );
        assert!(matches!(
            r,
            Err(EchoError::IntegrationFailure { .. }) | Err(EchoError::ModelEvaluation { .. })
        ));
    }
}
