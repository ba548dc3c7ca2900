//! Exact one-dimensional quantum reference on a uniform periodic grid.
//!
//! Kinetic energy is applied spectrally; propagation uses symmetric (Strang)
//! splitting with a fixed step per run. Every propagated state is checked
//! against a boundary-mass monitor so that wrap-around never goes unnoticed.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::echo::EchoSeries;
use crate::error::{EchoError, Result};
use crate::flow::{evolve, uniform_times, IntegratorOptions};
use crate::models::{HamiltonianModel, Observable};
use crate::phase::PhaseVector;
use crate::revivals::{LadderSource, SpectralLadder};
use crate::symplectic::max_stretch;

/// Fraction of the domain on each side that counts as boundary.
const EDGE_FRACTION: usize = 32;

/// Uniform periodic grid `x_j = q_min + j Δx`, `j = 0..n_points`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D {
    q_min: f64,
    q_max: f64,
    n_points: usize,
    hbar: f64,
}

impl Grid1D {
    pub fn new(q_min: f64, q_max: f64, n_points: usize, hbar: f64) -> Result<Self> {
        if !(q_max > q_min) || !q_min.is_finite() || !q_max.is_finite() {
            return Err(EchoError::Domain(format!("need q_max > q_min, got [{q_min}, {q_max}]")));
        }
        if n_points < 256 || !n_points.is_power_of_two() {
            return Err(EchoError::Resolution(format!(
                "n_points must be a power of two >= 256, got {n_points}"
            )));
        }
        if !(hbar > 0.0) {
            return Err(EchoError::InvalidInput(format!("hbar must be > 0, got {hbar}")));
        }
        Ok(Self {
            q_min,
            q_max,
            n_points,
            hbar,
        })
    }

    /// Smallest power-of-two grid on `[q_min, q_max]` that resolves momenta up
    /// to `p_reach` and a coherent width `√ħ` with eight points.
    pub fn covering(q_min: f64, q_max: f64, p_reach: f64, hbar: f64) -> Result<Self> {
        let len = q_max - q_min;
        let dx_momentum = PI * hbar / (1.25 * p_reach.max(hbar.sqrt()));
        let dx_width = hbar.sqrt() / 8.0;
        let dx = dx_momentum.min(dx_width);
        let n = ((len / dx).ceil() as usize).max(256).next_power_of_two();
        Self::new(q_min, q_max, n, hbar)
    }

    pub fn q_min(&self) -> f64 {
        self.q_min
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn spacing(&self) -> f64 {
        (self.q_max - self.q_min) / self.n_points as f64
    }

    pub fn positions(&self) -> Vec<f64> {
        let dx = self.spacing();
        (0..self.n_points).map(|j| self.q_min + j as f64 * dx).collect()
    }

    /// Momenta in FFT order.
    pub fn momenta(&self) -> Vec<f64> {
        let n = self.n_points as i64;
        let dk = 2.0 * PI / (self.q_max - self.q_min);
        (0..n)
            .map(|m| {
                let m = if m < n / 2 { m } else { m - n };
                self.hbar * dk * m as f64
            })
            .collect()
    }

    /// Largest representable momentum `πħ/Δx`.
    pub fn p_nyquist(&self) -> f64 {
        PI * self.hbar / self.spacing()
    }

    pub fn with_hbar(&self, hbar: f64) -> Result<Self> {
        Self::new(self.q_min, self.q_max, self.n_points, hbar)
    }
}

/// Complex samples on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridWavefunction {
    pub grid: Grid1D,
    pub samples: Vec<Complex64>,
}

struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }
}

impl GridWavefunction {
    pub fn norm(&self) -> f64 {
        let dx = self.grid.spacing();
        (self.samples.iter().map(|c| c.norm_sqr()).sum::<f64>() * dx).sqrt()
    }

    /// `⟨self, other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &GridWavefunction) -> Complex64 {
        assert_eq!(self.samples.len(), other.samples.len());
        let dx = self.grid.spacing();
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            * dx
    }

    /// Probability mass in the outer `1/32` of the domain on both sides.
    pub fn boundary_mass(&self) -> f64 {
        let n = self.samples.len();
        let edge = (n / EDGE_FRACTION).max(1);
        let dx = self.grid.spacing();
        let left: f64 = self.samples[..edge].iter().map(|c| c.norm_sqr()).sum();
        let right: f64 = self.samples[n - edge..].iter().map(|c| c.norm_sqr()).sum();
        (left + right) * dx
    }

    pub fn mean_position(&self) -> f64 {
        let dx = self.grid.spacing();
        self.grid
            .positions()
            .iter()
            .zip(&self.samples)
            .map(|(x, c)| x * c.norm_sqr())
            .sum::<f64>()
            * dx
    }

    /// Momentum-space samples `ψ̂(p_m)` in FFT order, normalized so that
    /// `Σ |ψ̂|² = 1`.
    pub fn momentum_amplitudes(&self) -> Vec<Complex64> {
        let n = self.samples.len();
        let fft = FftPair::new(n);
        let mut buf = self.samples.clone();
        fft.forward.process(&mut buf);
        let scale = (self.grid.spacing() / n as f64).sqrt();
        buf.iter_mut().for_each(|c| *c *= scale);
        buf
    }

    pub fn mean_momentum(&self) -> f64 {
        self.momentum_amplitudes()
            .iter()
            .zip(self.grid.momenta())
            .map(|(c, p)| p * c.norm_sqr())
            .sum()
    }

    fn check_boundary(&self, tol: f64, when: &str) -> Result<()> {
        let mass = self.boundary_mass();
        if mass > tol {
            return Err(EchoError::Domain(format!(
                "boundary mass {mass:.3e} exceeds {tol:.1e} {when}"
            )));
        }
        Ok(())
    }
}

/// Grid coherent state `φ_z(x) = (πħ)^{−1/4} exp(−(x−q)²/2ħ + i p (x − q/2)/ħ)`,
/// the translate `T̂(z) φ₀` with `T̂(z) = exp(i(p Q̂ − q P̂)/ħ)`.
pub fn discretize_coherent(z: &PhaseVector, grid: &Grid1D) -> Result<GridWavefunction> {
    discretize_coherent_with_tol(z, grid, 1e-12)
}

fn discretize_coherent_with_tol(
    z: &PhaseVector,
    grid: &Grid1D,
    boundary_tol: f64,
) -> Result<GridWavefunction> {
    if z.dim() != 1 {
        return Err(EchoError::InvalidDimension("grid oracle is one-dimensional".into()));
    }
    let hbar = grid.hbar();
    let (q, p) = (z[0], z[1]);
    let width = hbar.sqrt();
    if width / grid.spacing() < 8.0 {
        return Err(EchoError::Resolution(format!(
            "coherent width {width:.3e} covered by fewer than 8 points (dx = {:.3e})",
            grid.spacing()
        )));
    }
    if p.abs() + 6.0 * width > grid.p_nyquist() {
        return Err(EchoError::Resolution(format!(
            "momentum {p} exceeds grid reach {:.3}",
            grid.p_nyquist()
        )));
    }
    let norm = (PI * hbar).powf(-0.25);
    let samples = grid
        .positions()
        .iter()
        .map(|&x| {
            let arg = Complex64::new(-(x - q).powi(2) / (2.0 * hbar), p * (x - 0.5 * q) / hbar);
            arg.exp() * norm
        })
        .collect();
    let mut psi = GridWavefunction {
        grid: *grid,
        samples,
    };
    psi.check_boundary(boundary_tol, "for the initial coherent state")?;
    let nrm = psi.norm();
    psi.samples.iter_mut().for_each(|c| *c /= nrm);
    Ok(psi)
}

/// Strang-split propagator `e^{−iV dt/2ħ} e^{−iT dt/ħ} e^{−iV dt/2ħ}` with a
/// fixed step (negative steps propagate backwards).
pub struct SplitStepPropagator {
    grid: Grid1D,
    dt: f64,
    half_potential: Vec<Complex64>,
    full_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    fft: FftPair,
}

impl SplitStepPropagator {
    pub fn new(model: &HamiltonianModel, grid: &Grid1D, dt: f64) -> Result<Self> {
        if !model.is_splittable() {
            return Err(EchoError::UnsupportedModel(format!(
                "{model:?} is not of the form p^2/2 + V(q)"
            )));
        }
        let hbar = grid.hbar();
        let mut half = Vec::with_capacity(grid.n_points());
        let mut full = Vec::with_capacity(grid.n_points());
        for x in grid.positions() {
            let (v, _, _) = model.split_potential(x).expect("splittable");
            half.push(Complex64::from_polar(1.0, -v * dt / (2.0 * hbar)));
            full.push(Complex64::from_polar(1.0, -v * dt / hbar));
        }
        let kinetic = grid
            .momenta()
            .iter()
            .map(|p| Complex64::from_polar(1.0, -p * p * dt / (2.0 * hbar)))
            .collect();
        Ok(Self {
            grid: *grid,
            dt,
            half_potential: half,
            full_potential: full,
            kinetic,
            fft: FftPair::new(grid.n_points()),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn kinetic_step(&self, buf: &mut [Complex64]) {
        let n = buf.len() as f64;
        self.fft.forward.process(buf);
        for (c, k) in buf.iter_mut().zip(&self.kinetic) {
            *c *= k / n;
        }
        self.fft.inverse.process(buf);
    }

    /// Applies `n` steps in place.
    pub fn advance(&self, psi: &mut GridWavefunction, n: usize) {
        if n == 0 {
            return;
        }
        assert_eq!(psi.grid, self.grid, "propagator built for a different grid");
        let buf = &mut psi.samples;
        mul(buf, &self.half_potential);
        for step in 0..n {
            self.kinetic_step(buf);
            if step + 1 < n {
                mul(buf, &self.full_potential);
            }
        }
        mul(buf, &self.half_potential);
    }
}

fn mul(buf: &mut [Complex64], phase: &[Complex64]) {
    for (c, f) in buf.iter_mut().zip(phase) {
        *c *= f;
    }
}

/// `e^{−i t Ĥ/ħ} ψ` with `n_steps` Strang steps.
pub fn split_step_propagate(
    model: &HamiltonianModel,
    psi: &GridWavefunction,
    t_final: f64,
    n_steps: usize,
) -> Result<GridWavefunction> {
    propagate_checked(model, psi, t_final, n_steps, 1e-12)
}

fn propagate_checked(
    model: &HamiltonianModel,
    psi: &GridWavefunction,
    t_final: f64,
    n_steps: usize,
    boundary_tol: f64,
) -> Result<GridWavefunction> {
    if n_steps == 0 {
        return Err(EchoError::InvalidInput("n_steps must be positive".into()));
    }
    let prop = SplitStepPropagator::new(model, &psi.grid, t_final / n_steps as f64)?;
    let norm0 = psi.norm();
    let mut out = psi.clone();
    prop.advance(&mut out, n_steps);
    check_unitarity(norm0, &out)?;
    out.check_boundary(boundary_tol, &format!("at t = {t_final}"))?;
    Ok(out)
}

fn check_unitarity(norm0: f64, psi: &GridWavefunction) -> Result<()> {
    let drift = (psi.norm() - norm0).abs();
    if drift > 1e-10 {
        return Err(EchoError::Domain(format!("norm drift {drift:.3e} exceeds 1e-10")));
    }
    Ok(())
}

/// Grid and step settings for oracle runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    /// Explicit grid `(q_min, q_max, n_points)`; sized automatically when `None`.
    pub grid: Option<(f64, f64, usize)>,
    /// Largest split-step time step.
    pub dt_max: f64,
    pub boundary_tol: f64,
    /// Widths (in units of the evolved coherent width) kept inside the domain.
    pub margin: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid: None,
            dt_max: 1e-3,
            boundary_tol: 1e-12,
            margin: 10.0,
        }
    }
}

impl OracleConfig {
    /// Builds the grid for propagating `φ_z` under every model in `models`
    /// over `[−t_span, t_span]`.
    pub fn grid_for(
        &self,
        models: &[&HamiltonianModel],
        z: &PhaseVector,
        t_span: f64,
        hbar: f64,
    ) -> Result<Grid1D> {
        if let Some((lo, hi, n)) = self.grid {
            return Grid1D::new(lo, hi, n, hbar);
        }
        let times = uniform_times(t_span.abs().max(1e-9), 200);
        let back: Vec<f64> = times.iter().map(|t| -t).collect();
        let (mut q_lo, mut q_hi, mut p_max) = (z[0], z[0], z[1].abs());
        let mut stretch: f64 = 1.0;
        let opts = IntegratorOptions::default();
        for model in models {
            for grid in [&times, &back] {
                let b = evolve(model, z, grid, &opts)?;
                for (pt, f) in b.points.iter().zip(&b.stability) {
                    q_lo = q_lo.min(pt[0]);
                    q_hi = q_hi.max(pt[0]);
                    p_max = p_max.max(pt[1].abs());
                    stretch = stretch.max(max_stretch(f));
                }
            }
        }
        let sigma = (hbar * stretch / 2.0).sqrt().max((hbar / 2.0).sqrt());
        let pad = self.margin * sigma;
        let q_min = q_lo - pad;
        let q_max = q_hi + pad;
        // keep the edge strips clear of the padded region
        let len = q_max - q_min;
        let extra = 2.0 * len / EDGE_FRACTION as f64;
        Grid1D::covering(q_min - extra, q_max + extra, p_max + pad, hbar)
    }
}

/// Propagates along a monotone time grid starting at 0, calling `visit` at
/// each grid time.
fn propagate_on(
    model: &HamiltonianModel,
    psi: &GridWavefunction,
    times: &[f64],
    cfg: &OracleConfig,
    mut visit: impl FnMut(usize, &GridWavefunction) -> Result<()>,
) -> Result<()> {
    let mut cur = psi.clone();
    let norm0 = cur.norm();
    visit(0, &cur)?;
    let mut cached: Option<SplitStepPropagator> = None;
    for k in 1..times.len() {
        let dt_seg = times[k] - times[k - 1];
        let n = (dt_seg.abs() / cfg.dt_max).ceil().max(1.0) as usize;
        let dt = dt_seg / n as f64;
        let reuse = cached.as_ref().is_some_and(|p| (p.dt() - dt).abs() <= 1e-15 * dt.abs());
        if !reuse {
            cached = Some(SplitStepPropagator::new(model, &psi.grid, dt)?);
        }
        cached.as_ref().expect("set").advance(&mut cur, n);
        check_unitarity(norm0, &cur)?;
        cur.check_boundary(cfg.boundary_tol, &format!("at t = {}", times[k]))?;
        visit(k, &cur)?;
    }
    Ok(())
}

fn validate_oracle_times(times: &[f64]) -> Result<()> {
    if times.first() != Some(&0.0) {
        return Err(EchoError::InvalidInput("time grid must start at 0".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EchoError::InvalidInput("time grid must be increasing".into()));
    }
    Ok(())
}

/// `|⟨U₀(t)φ_z, U_δ(t)φ_z⟩|²` on `times`.
pub fn exact_fidelity(
    model0: &HamiltonianModel,
    model_delta: &HamiltonianModel,
    z: &PhaseVector,
    times: &[f64],
    hbar: f64,
    cfg: &OracleConfig,
) -> Result<EchoSeries> {
    validate_oracle_times(times)?;
    let t_max = *times.last().expect("non-empty");
    let grid = cfg.grid_for(&[model0, model_delta], z, t_max, hbar)?;
    let psi = discretize_coherent_with_tol(z, &grid, cfg.boundary_tol)?;
    let mut unperturbed = Vec::with_capacity(times.len());
    propagate_on(model0, &psi, times, cfg, |_, s| {
        unperturbed.push(s.clone());
        Ok(())
    })?;
    let mut values = Vec::with_capacity(times.len());
    propagate_on(model_delta, &psi, times, cfg, |k, s| {
        values.push(unperturbed[k].inner(s).norm_sqr());
        Ok(())
    })?;
    Ok(EchoSeries::exact(times.to_vec(), values))
}

/// `|⟨φ_z, U(t)φ_z⟩|` on `times`.
pub fn exact_return_amplitude(
    model: &HamiltonianModel,
    z: &PhaseVector,
    times: &[f64],
    hbar: f64,
    cfg: &OracleConfig,
) -> Result<EchoSeries> {
    validate_oracle_times(times)?;
    let t_max = *times.last().expect("non-empty");
    let grid = cfg.grid_for(&[model], z, t_max, hbar)?;
    let psi = discretize_coherent_with_tol(z, &grid, cfg.boundary_tol)?;
    let mut values = Vec::with_capacity(times.len());
    propagate_on(model, &psi, times, cfg, |_, s| {
        values.push(psi.inner(s).norm());
        Ok(())
    })?;
    Ok(EchoSeries::exact(times.to_vec(), values))
}

/// Quantum echo state `U₀(−t) U_δ(t) φ_z` on the grid.
pub fn echo_state(
    model0: &HamiltonianModel,
    model_delta: &HamiltonianModel,
    z: &PhaseVector,
    t: f64,
    hbar: f64,
    cfg: &OracleConfig,
) -> Result<GridWavefunction> {
    let grid = cfg.grid_for(&[model0, model_delta], z, t, hbar)?;
    let psi = discretize_coherent_with_tol(z, &grid, cfg.boundary_tol)?;
    if t == 0.0 {
        return Ok(psi);
    }
    let n = (t.abs() / cfg.dt_max).ceil().max(1.0) as usize;
    let forward = propagate_checked(model_delta, &psi, t, n, cfg.boundary_tol)?;
    propagate_checked(model0, &forward, -t, n, cfg.boundary_tol)
}

/// `⟨E_δ(t)φ_z, L̂ E_δ(t)φ_z⟩` with `L̂` the Weyl quantization of `observable`.
pub fn echo_expectation(
    model0: &HamiltonianModel,
    model_delta: &HamiltonianModel,
    observable: &dyn Observable,
    z: &PhaseVector,
    t: f64,
    hbar: f64,
    cfg: &OracleConfig,
) -> Result<f64> {
    let state = echo_state(model0, model_delta, z, t, hbar, cfg)?;
    let value = weyl_expectation(&|q, p| Complex64::new(observable.value(&[q, p]), 0.0), &state)?;
    Ok(value.re)
}

/// Lowest `k` eigenvalues of `p²/2 + V(q)` discretized with the Fourier
/// (periodic spectral) kinetic matrix.
pub fn eigensolve_1d(
    model: &HamiltonianModel,
    hbar: f64,
    grid: &Grid1D,
    k: usize,
) -> Result<SpectralLadder> {
    if !model.is_splittable() {
        return Err(EchoError::UnsupportedModel(format!(
            "{model:?} is not of the form p^2/2 + V(q)"
        )));
    }
    if k == 0 {
        return Err(EchoError::InvalidInput("need at least one level".into()));
    }
    let grid = grid.with_hbar(hbar)?;
    let n = grid.n_points();
    if k > n / 4 {
        return Err(EchoError::Truncation(format!("{k} levels on {n} points")));
    }
    let xs = grid.positions();
    let potential: Vec<f64> = xs
        .iter()
        .map(|&x| model.split_potential(x).expect("splittable").0)
        .collect();
    let kinetic = fourier_kinetic_row(&grid);
    let h = DMatrix::from_fn(n, n, |i, j| {
        let off = if i >= j { i - j } else { j - i };
        kinetic[off] + if i == j { potential[i] } else { 0.0 }
    });
    let mut eig: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let energies = eig[..k].to_vec();
    let edge = potential[0].min(potential[n - 1]);
    let v_min = potential.iter().copied().fold(f64::INFINITY, f64::min);
    let top = energies[k - 1];
    if top >= edge {
        return Err(EchoError::Truncation(format!(
            "level {top:.6} is not below the boundary potential {edge:.6}"
        )));
    }
    let p_top = (2.0 * (top - v_min)).sqrt();
    if p_top > 0.7 * grid.p_nyquist() {
        return Err(EchoError::Truncation(format!(
            "classical momentum {p_top:.3} of level {k} exceeds 70% of the grid reach {:.3}",
            grid.p_nyquist()
        )));
    }
    Ok(SpectralLadder::new(hbar, 0, energies, LadderSource::GridDiagonalization))
}

/// First row `T(x_j − x_0)` of the spectral kinetic matrix
/// `(1/N) Σ_m ħ²k_m²/2 cos(k_m (x_j − x_0))`.
fn fourier_kinetic_row(grid: &Grid1D) -> Vec<f64> {
    let n = grid.n_points();
    let momenta = grid.momenta();
    let hbar = grid.hbar();
    let dx = grid.spacing();
    (0..n)
        .map(|j| {
            momenta
                .iter()
                .map(|p| {
                    let k = p / hbar;
                    0.5 * p * p * (k * j as f64 * dx).cos()
                })
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

/// Wigner function sampled on `x_j × p_m`, `p_m = m πħ/(NΔx)`.
#[derive(Debug, Clone)]
pub struct WignerGrid {
    pub positions: Vec<f64>,
    /// Momenta in increasing order.
    pub momenta: Vec<f64>,
    /// `values[j][m]`, normalized so that `Σ W Δx Δp = 1` for a unit state.
    pub values: Vec<Vec<f64>>,
    pub dx: f64,
    pub dp: f64,
}

/// `W(x, p) = (πħ)⁻¹ ∫ ψ*(x − y) ψ(x + y) e^{−2ipy/ħ} dy` (non-periodic
/// correlation; samples beyond the grid are zero).
pub fn wigner(psi: &GridWavefunction) -> WignerGrid {
    let grid = psi.grid;
    let n = grid.n_points();
    let hbar = grid.hbar();
    let dx = grid.spacing();
    let dp = PI * hbar / (n as f64 * dx);
    let fft = FftPair::new(n);
    let half = n as i64 / 2;
    let mut values = Vec::with_capacity(n);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n as i64 {
        for (slot, b) in buf.iter_mut().enumerate() {
            let k = slot as i64;
            let k = if k < half { k } else { k - n as i64 };
            let (lo, hi) = (j - k, j + k);
            *b = if lo >= 0 && hi >= 0 && (lo as usize) < n && (hi as usize) < n {
                psi.samples[lo as usize].conj() * psi.samples[hi as usize]
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        fft.forward.process(&mut buf);
        // reorder m = −N/2 .. N/2−1
        let row: Vec<f64> = (0..n)
            .map(|idx| {
                let m = idx as i64 - half;
                let slot = if m < 0 { (m + n as i64) as usize } else { m as usize };
                buf[slot].re * dx / (PI * hbar)
            })
            .collect();
        values.push(row);
    }
    let momenta = (0..n).map(|idx| (idx as f64 - half as f64) * dp).collect();
    WignerGrid {
        positions: grid.positions(),
        momenta,
        values,
        dx,
        dp,
    }
}

/// `∫ a(q, p) W_ψ(q, p) dq dp`, the expectation of the Weyl quantization of `a`.
pub fn weyl_expectation(
    symbol: &dyn Fn(f64, f64) -> Complex64,
    psi: &GridWavefunction,
) -> Result<Complex64> {
    // the Wigner momentum window is half the grid's momentum reach
    let p_window = 0.5 * psi.grid.p_nyquist();
    let leak: f64 = psi
        .momentum_amplitudes()
        .iter()
        .zip(psi.grid.momenta())
        .filter(|(_, p)| p.abs() > 0.8 * p_window)
        .map(|(c, _)| c.norm_sqr())
        .sum();
    if leak > 1e-10 {
        return Err(EchoError::Domain(format!(
            "momentum mass {leak:.3e} outside the Wigner window |p| < {:.3}",
            0.8 * p_window
        )));
    }
    if psi.boundary_mass() > 1e-10 {
        return Err(EchoError::Domain("state reaches the grid boundary".into()));
    }
    let w = wigner(psi);
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, &x) in w.positions.iter().enumerate() {
        for (m, &p) in w.momenta.iter().enumerate() {
            let wv = w.values[j][m];
            if wv != 0.0 {
                acc += symbol(x, p) * wv;
            }
        }
    }
    Ok(acc * w.dx * w.dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Perturbation;

    fn grid(hbar: f64) -> Grid1D {
        Grid1D::new(-6.0, 6.0, 1024, hbar).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid1D::new(1.0, 0.0, 256, 1.0).is_err());
        assert!(Grid1D::new(0.0, 1.0, 300, 1.0).is_err());
        assert!(Grid1D::new(0.0, 1.0, 128, 1.0).is_err());
        assert!(Grid1D::new(0.0, 1.0, 256, 0.0).is_err());
    }

    #[test]
    fn coherent_state_moments() {
        let g = grid(0.05);
        let psi0 = discretize_coherent(&PhaseVector::new(&[0.0], &[0.0]), &g).unwrap();
        assert!((psi0.norm() - 1.0).abs() < 1e-12);
        let mid = g.n_points() / 2;
        assert!(psi0.samples[mid].im.abs() < 1e-15 && psi0.samples[mid].re > 0.0);

        let z = PhaseVector::new(&[0.7], &[-1.1]);
        let psi = discretize_coherent(&z, &g).unwrap();
        assert!((psi.mean_position() - 0.7).abs() < 1e-8);
        assert!((psi.mean_momentum() + 1.1).abs() < 1e-8);
    }

    #[test]
    fn coherent_overlap_matches_closed_form() {
        let hbar = 0.05;
        let g = grid(hbar);
        let z = PhaseVector::new(&[0.3], &[0.4]);
        let w = PhaseVector::new(&[-0.2], &[0.9]);
        let a = discretize_coherent(&z, &g).unwrap();
        let b = discretize_coherent(&w, &g).unwrap();
        let d2 = (0.5f64).powi(2) + (0.5f64).powi(2);
        let expected = (-d2 / (4.0 * hbar)).exp();
        assert!((a.inner(&b).norm() - expected).abs() < 1e-8);
    }

    #[test]
    fn resolution_and_domain_errors() {
        let coarse = Grid1D::new(-6.0, 6.0, 256, 0.001).unwrap();
        assert!(matches!(
            discretize_coherent(&PhaseVector::new(&[0.0], &[0.0]), &coarse),
            Err(EchoError::Resolution(_))
        ));
        let g = grid(0.05);
        assert!(matches!(
            discretize_coherent(&PhaseVector::new(&[5.9], &[0.0]), &g),
            Err(EchoError::Domain(_))
        ));
    }

    #[test]
    fn free_spreading_is_exact() {
        let hbar = 0.1;
        let g = Grid1D::new(-15.0, 15.0, 2048, hbar).unwrap();
        let (q, p) = (-1.0, 0.8);
        let psi = discretize_coherent(&PhaseVector::new(&[q], &[p]), &g).unwrap();
        let t = 2.5;
        let out = split_step_propagate(&HamiltonianModel::free(), &psi, t, 10).unwrap();
        let norm = (PI * hbar).powf(-0.25);
        let s = Complex64::new(1.0, t);
        let err = g
            .positions()
            .iter()
            .zip(&out.samples)
            .map(|(&x, c)| {
                let u = x - q - p * t;
                let exact = (Complex64::new(-u * u / (2.0 * hbar), 0.0) / s
                    + Complex64::new(0.0, (p * (x - 0.5 * q) - 0.5 * p * p * t) / hbar))
                    .exp()
                    * norm
                    / s.sqrt();
                (exact - c).norm()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn harmonic_coherent_state_stays_coherent() {
        let hbar = 0.05;
        let g = grid(hbar);
        let model = HamiltonianModel::harmonic(1.0);
        let z = PhaseVector::new(&[1.0], &[0.5]);
        let psi = discretize_coherent(&z, &g).unwrap();
        let t = 2.0 * PI;
        let out = split_step_propagate(&model, &psi, t, 4000).unwrap();
        let overlap = psi.inner(&out).norm();
        assert!(overlap >= 1.0 - 1e-6, "{overlap}");
        assert!((out.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn strang_splitting_is_second_order() {
        let hbar = 0.05;
        let g = grid(hbar);
        let model = HamiltonianModel::quartic();
        let psi = discretize_coherent(&PhaseVector::new(&[0.8], &[0.0]), &g).unwrap();
        let t = 1.0;
        let reference = split_step_propagate(&model, &psi, t, 6400).unwrap();
        let err = |n| {
            let s = split_step_propagate(&model, &psi, t, n).unwrap();
            s.samples
                .iter()
                .zip(&reference.samples)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt()
                * g.spacing().sqrt()
        };
        let (e1, e2) = (err(200), err(400));
        let ratio = e1 / e2;
        assert!((3.6..4.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn fidelity_trivial_and_displaced_oscillator() {
        let hbar = 0.05;
        let h0 = HamiltonianModel::harmonic(1.0);
        let z = PhaseVector::new(&[1.0], &[0.0]);
        let times = uniform_times(6.0, 13);
        let cfg = OracleConfig::default();
        let same = exact_fidelity(&h0, &h0, &z, &times, hbar, &cfg).unwrap();
        assert!(same.values.iter().all(|f| (f - 1.0).abs() < 1e-10));

        let delta = 0.1;
        let hd = h0.clone().with_perturbation(Perturbation::Linear, delta).unwrap();
        let f = exact_fidelity(&h0, &hd, &z, &times, hbar, &cfg).unwrap();
        for (t, v) in times.iter().zip(&f.values) {
            let expected = (-2.0 * delta * delta * (t / 2.0).sin().powi(2) / hbar).exp();
            assert!((v - expected).abs() < 1e-7, "t={t}: {v} vs {expected}");
        }
    }

    #[test]
    fn eigenvalues_harmonic() {
        let hbar = 0.1;
        let g = Grid1D::new(-5.0, 5.0, 256, hbar).unwrap();
        let ladder = eigensolve_1d(&HamiltonianModel::harmonic(1.0), hbar, &g, 12).unwrap();
        for (n, e) in ladder.energies.iter().enumerate() {
            assert!((e - (n as f64 + 0.5) * hbar).abs() < 1e-8, "{n}: {e}");
        }
        assert!(matches!(
            eigensolve_1d(&HamiltonianModel::harmonic(1.0), hbar, &Grid1D::new(-1.0, 1.0, 256, hbar).unwrap(), 40),
            Err(EchoError::Truncation(_))
        ));
    }

    #[test]
    fn eigenvalues_quartic_converged() {
        let hbar = 0.05;
        let m = HamiltonianModel::quartic();
        let a = eigensolve_1d(&m, hbar, &Grid1D::new(-2.0, 2.0, 256, hbar).unwrap(), 10).unwrap();
        let b = eigensolve_1d(&m, hbar, &Grid1D::new(-2.0, 2.0, 512, hbar).unwrap(), 10).unwrap();
        for (x, y) in a.energies.iter().zip(&b.energies) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
    }

    #[test]
    fn pendulum_low_levels_near_small_oscillation() {
        let hbar = 0.01;
        let g = Grid1D::new(-PI, PI, 512, hbar).unwrap();
        let ladder = eigensolve_1d(&HamiltonianModel::pendulum(), hbar, &g, 3).unwrap();
        for (n, e) in ladder.energies.iter().enumerate() {
            let approx = -1.0 + (n as f64 + 0.5) * hbar;
            // first anharmonic correction is O(ħ²)
            assert!((e - approx).abs() < 5.0 * hbar * hbar, "{n}: {e} vs {approx}");
        }
    }

    #[test]
    fn wigner_pairings() {
        let hbar = 0.1;
        let g = Grid1D::new(-5.0, 5.0, 256, hbar).unwrap();
        let z = PhaseVector::new(&[0.6], &[-0.4]);
        let psi = discretize_coherent(&z, &g).unwrap();
        let one = weyl_expectation(&|_, _| Complex64::new(1.0, 0.0), &psi).unwrap();
        assert!((one - 1.0).norm() < 1e-8);
        let q = weyl_expectation(&|q, _| Complex64::new(q, 0.0), &psi).unwrap();
        assert!((q.re - 0.6).abs() < 1e-8);
        let p = weyl_expectation(&|_, p| Complex64::new(p, 0.0), &psi).unwrap();
        assert!((p.re + 0.4).abs() < 1e-8);
        // ⟨Ĥ⟩ = H(z) + ħ/2 for the oscillator
        let e = weyl_expectation(&|q, p| Complex64::new(0.5 * (q * q + p * p), 0.0), &psi).unwrap();
        assert!((e.re - (0.5 * (0.36 + 0.16) + 0.5 * hbar)).abs() < 1e-8);
    }
}
