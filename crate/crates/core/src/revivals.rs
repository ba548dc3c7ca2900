//! Spectral ladders, wavepacket coefficients and return probabilities for
//! one-dimensional confining systems.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::action::{action_and_period_with, ActionOptions};
use crate::error::{EchoError, Result};
use crate::models::HamiltonianModel;

/// Origin of the energies in a [`SpectralLadder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LadderSource {
    BohrSommerfeld,
    GridDiagonalization,
    ExplicitFormula,
}

/// `b₀′, b₀″, b₀‴` at the reference action `F̄ = (n̄ + ½)ħ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderDerivatives {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

/// Energies `E_n`, `n = first_index, first_index + 1, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLadder {
    pub hbar: f64,
    pub first_index: usize,
    pub energies: Vec<f64>,
    pub ref_index: Option<usize>,
    pub derivs: Option<LadderDerivatives>,
    pub source: LadderSource,
}

impl SpectralLadder {
    pub fn new(hbar: f64, first_index: usize, energies: Vec<f64>, source: LadderSource) -> Self {
        Self {
            hbar,
            first_index,
            energies,
            ref_index: None,
            derivs: None,
            source,
        }
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.first_index..self.first_index + self.energies.len()
    }

    pub fn energy(&self, n: usize) -> Option<f64> {
        n.checked_sub(self.first_index)
            .and_then(|k| self.energies.get(k).copied())
    }

    /// Index of the level closest to `energy`.
    pub fn nearest_index(&self, energy: f64) -> Option<usize> {
        self.energies
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - energy).abs().total_cmp(&(b.1 - energy).abs()))
            .map(|(k, _)| k + self.first_index)
    }

    pub fn with_reference(mut self, ref_index: usize, derivs: LadderDerivatives) -> Self {
        self.ref_index = Some(ref_index);
        self.derivs = Some(derivs);
        self
    }

    /// Attaches classical derivatives at `ref_index` computed from the action
    /// of `model` (useful for grid ladders).
    pub fn with_classical_reference(
        self,
        model: &HamiltonianModel,
        ref_index: usize,
        opts: &ActionOptions,
    ) -> Result<Self> {
        let f_bar = (ref_index as f64 + 0.5) * self.hbar;
        let e = invert_action(model, 2.0 * PI * f_bar, opts)?;
        let d = classical_derivatives(model, e, opts)?;
        Ok(self.with_reference(ref_index, d))
    }

    fn check_increasing(&self) -> Result<()> {
        if self.energies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(EchoError::AssumptionViolation("ladder is not strictly increasing".into()));
        }
        Ok(())
    }
}

fn potential_floor(model: &HamiltonianModel, opts: &ActionOptions) -> Result<f64> {
    model
        .split_potential(opts.center)
        .map(|v| v.0)
        .ok_or_else(|| EchoError::UnsupportedModel(format!("{model:?}")))
}

/// Solves `𝒥(E) = target` on the branch of orbits around `opts.center`.
pub fn invert_action(model: &HamiltonianModel, target: f64, opts: &ActionOptions) -> Result<f64> {
    let floor = potential_floor(model, opts)?;
    let g = |e: f64| action_and_period_with(model, e, opts).map(|a| (a.action - target, a.period));
    // bracket; orbits may cease to exist above some energy, so the upper end
    // grows cautiously after a failed evaluation
    let mut lo = floor;
    let mut width = 1e-2 * (1.0 + floor.abs());
    let mut growth = 2.0;
    let mut ghi = None;
    for _ in 0..400 {
        let hi = lo.max(floor) + width;
        match g(hi) {
            Ok(v) if v.0 >= 0.0 => {
                ghi = Some((hi, v));
                break;
            }
            Ok(_) => {
                lo = hi;
                width *= growth;
            }
            Err(e) => {
                width *= 0.5;
                growth = 1.0 + 0.5 * (growth - 1.0);
                if width < 1e-14 * (1.0 + lo.abs()) {
                    return Err(e);
                }
            }
        }
    }
    let (mut hi, ghi) = ghi.ok_or(EchoError::NonConfining { energy: lo + width })?;
    // safeguarded Newton with T = 𝒥′
    let mut x = hi;
    let mut gx = ghi;
    for _ in 0..100 {
        if gx.0.abs() <= 1e-15 * target.abs().max(1e-300) {
            return Ok(x);
        }
        if gx.0 > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let newton = x - gx.0 / gx.1;
        x = if newton > lo && newton < hi && gx.1 > 0.0 {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
            return Ok(x);
        }
        gx = g(x)?;
    }
    Ok(x)
}

/// `b₀′ = G`, `b₀″ = G′G`, `b₀‴ = (G″G + G′²)G` with `G(E) = 2π/T(E)`; the
/// energy derivatives of `T` come from five-point central differences.
pub fn classical_derivatives(
    model: &HamiltonianModel,
    energy: f64,
    opts: &ActionOptions,
) -> Result<LadderDerivatives> {
    let floor = potential_floor(model, opts)?;
    let depth = energy - floor;
    if !(depth > 0.0) {
        return Err(EchoError::SingularOrbit { energy });
    }
    let h = 2e-3 * depth.min(1.0).max(1e-6);
    let t = |k: f64| action_and_period_with(model, energy + k * h, opts).map(|a| a.period);
    let (tm2, tm1, t0, tp1, tp2) = (t(-2.0)?, t(-1.0)?, t(0.0)?, t(1.0)?, t(2.0)?);
    let d1 = (tm2 - 8.0 * tm1 + 8.0 * tp1 - tp2) / (12.0 * h);
    let d2 = (-tm2 + 16.0 * tm1 - 30.0 * t0 + 16.0 * tp1 - tp2) / (12.0 * h * h);
    let g = 2.0 * PI / t0;
    let g1 = -2.0 * PI * d1 / (t0 * t0);
    let g2 = -2.0 * PI * (d2 / (t0 * t0) - 2.0 * d1 * d1 / (t0 * t0 * t0));
    Ok(LadderDerivatives {
        b1: g,
        b2: g1 * g,
        b3: (g2 * g + g1 * g1) * g,
    })
}

/// Bohr–Sommerfeld levels `𝒥(E_n) = 2π(n + ½)ħ` inside the open window,
/// with derivatives at the level nearest `ref_energy`.
pub fn bohr_sommerfeld_ladder(
    model: &HamiltonianModel,
    hbar: f64,
    window: (f64, f64),
    ref_energy: f64,
) -> Result<SpectralLadder> {
    bohr_sommerfeld_ladder_with(model, hbar, window, ref_energy, &ActionOptions::default())
}

pub fn bohr_sommerfeld_ladder_with(
    model: &HamiltonianModel,
    hbar: f64,
    window: (f64, f64),
    ref_energy: f64,
    opts: &ActionOptions,
) -> Result<SpectralLadder> {
    if !(hbar > 0.0) {
        return Err(EchoError::InvalidInput(format!("hbar must be > 0, got {hbar}")));
    }
    let (e_lo, e_hi) = window;
    let floor = potential_floor(model, opts)?;
    if !(e_hi > e_lo) || e_hi <= floor {
        return Err(EchoError::NoLevels);
    }
    let action = |e: f64| -> Result<f64> {
        if e <= floor {
            Ok(0.0)
        } else {
            Ok(action_and_period_with(model, e, opts)?.action)
        }
    };
    let j_lo = action(e_lo)?;
    let j_hi = action(e_hi)?;
    if j_hi < j_lo {
        return Err(EchoError::AssumptionViolation("action is not monotone on the window".into()));
    }
    let quantum = 2.0 * PI * hbar;
    let n_min = (j_lo / quantum - 0.5).floor() as i64 + 1;
    let n_max = (j_hi / quantum - 0.5).ceil() as i64 - 1;
    let n_min = n_min.max(0);
    if n_max < n_min {
        return Err(EchoError::NoLevels);
    }
    let mut energies = Vec::with_capacity((n_max - n_min + 1) as usize);
    for n in n_min..=n_max {
        energies.push(invert_action(model, quantum * (n as f64 + 0.5), opts)?);
    }
    let ladder = SpectralLadder::new(hbar, n_min as usize, energies, LadderSource::BohrSommerfeld);
    ladder.check_increasing()?;
    let n_bar = ladder.nearest_index(ref_energy).expect("non-empty");
    let e_bar = ladder.energy(n_bar).expect("in range");
    let d = classical_derivatives(model, e_bar, opts)?;
    Ok(ladder.with_reference(n_bar, d))
}

/// `E_n = b((n + ½)ħ)` for `n` in `indices`; `b` returns `(b, b′, b″, b‴)`.
pub fn explicit_ladder(
    hbar: f64,
    indices: std::ops::Range<usize>,
    ref_index: usize,
    b: impl Fn(f64) -> [f64; 4],
) -> Result<SpectralLadder> {
    if indices.is_empty() {
        return Err(EchoError::NoLevels);
    }
    let first = indices.start;
    let energies = indices.map(|n| b((n as f64 + 0.5) * hbar)[0]).collect();
    let [_, b1, b2, b3] = b((ref_index as f64 + 0.5) * hbar);
    let ladder = SpectralLadder::new(hbar, first, energies, LadderSource::ExplicitFormula);
    ladder.check_increasing()?;
    Ok(ladder.with_reference(ref_index, LadderDerivatives { b1, b2, b3 }))
}

/// Envelope `χ₁`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Chi1 {
    /// `e^{−x²/4}`.
    Gaussian,
    /// `sech(x/2)`.
    Sech,
}

impl Chi1 {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Chi1::Gaussian => (-0.25 * x * x).exp(),
            Chi1::Sech => 1.0 / (0.5 * x).cosh(),
        }
    }
}

/// Argument of `χ₁`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoefficientForm {
    /// `χ₁((E_n − E_n̄)/τ)`.
    Energy,
    /// `χ₁((n − n̄)/σ)` with `σ = τ/(ħ b₀′)`, the linearization of the
    /// energy form; its squared weights are exactly Gaussian in `n`.
    Index,
}

/// Smooth bump: 1 on `[−½, ½]`, 0 outside `(−1, 1)`, `C^∞`.
pub fn chi0(x: f64) -> f64 {
    let a = x.abs();
    if a <= 0.5 {
        1.0
    } else if a >= 1.0 {
        0.0
    } else {
        // smooth step between the plateau and the edge
        let s = 2.0 * (1.0 - a); // 1 at a = ½, 0 at a = 1
        let f = |u: f64| if u > 0.0 { (-1.0 / u).exp() } else { 0.0 };
        f(s) / (f(s) + f(1.0 - s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavepacketSpec {
    /// `τ = ħ^θ`.
    pub theta: f64,
    /// `ε = ħ^{θ′}`.
    pub theta_prime: f64,
    pub chi1: Chi1,
    pub form: CoefficientForm,
    pub center_energy: f64,
}

impl WavepacketSpec {
    pub fn new(center_energy: f64) -> Self {
        Self {
            theta: 0.8,
            theta_prime: 0.4,
            chi1: Chi1::Gaussian,
            form: CoefficientForm::Energy,
            center_energy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.theta_prime && self.theta_prime < self.theta && self.theta < 1.0) {
            return Err(EchoError::InvalidInput(format!(
                "need 0 < theta' < theta < 1, got theta = {}, theta' = {}",
                self.theta, self.theta_prime
            )));
        }
        if !self.center_energy.is_finite() {
            return Err(EchoError::InvalidInput("center energy must be finite".into()));
        }
        Ok(())
    }

    pub fn tau(&self, hbar: f64) -> f64 {
        hbar.powf(self.theta)
    }

    pub fn epsilon(&self, hbar: f64) -> f64 {
        hbar.powf(self.theta_prime)
    }
}

/// Coefficients aligned with the ladder's levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavepacket {
    pub coeffs: Vec<f64>,
    pub ref_index: usize,
    /// Normalization `K` of the cutoff product.
    pub norm_constant: f64,
    /// `σ = τ/(ħ b₀′)` when derivatives are available.
    pub sigma_index: Option<f64>,
}

/// `c_n = K χ₁(·) χ₀((E_n − E)/ε)` normalized to `Σ c_n² = 1`.
///
/// The reference level is the ladder's `ref_index` when set, otherwise the
/// level nearest the centre energy.
pub fn wavepacket_coefficients(ladder: &SpectralLadder, spec: &WavepacketSpec) -> Result<Wavepacket> {
    spec.validate()?;
    if ladder.is_empty() {
        return Err(EchoError::NoLevels);
    }
    let hbar = ladder.hbar;
    let tau = spec.tau(hbar);
    let eps = spec.epsilon(hbar);
    let n_bar = ladder
        .ref_index
        .or_else(|| ladder.nearest_index(spec.center_energy))
        .expect("non-empty");
    let e_bar = ladder
        .energy(n_bar)
        .ok_or_else(|| EchoError::InvalidInput(format!("reference level {n_bar} outside the ladder")))?;
    let sigma = ladder.derivs.map(|d| tau / (hbar * d.b1));
    let raw: Vec<f64> = ladder
        .indices()
        .zip(&ladder.energies)
        .map(|(n, &e)| {
            let x = match spec.form {
                CoefficientForm::Energy => Ok((e - e_bar) / tau),
                CoefficientForm::Index => sigma
                    .map(|s| (n as f64 - n_bar as f64) / s)
                    .ok_or_else(|| EchoError::InvalidInput("index form needs ladder derivatives".into())),
            }?;
            Ok(spec.chi1.eval(x) * chi0((e - spec.center_energy) / eps))
        })
        .collect::<Result<_>>()?;
    let total: f64 = raw.iter().map(|c| c * c).sum();
    if !(total > 1e-300) {
        return Err(EchoError::EmptyPacket);
    }
    let k = total.sqrt().recip();
    Ok(Wavepacket {
        coeffs: raw.iter().map(|c| c * k).collect(),
        ref_index: n_bar,
        norm_constant: k,
        sigma_index: sigma,
    })
}

/// Approximant represented by an [`AutocorrSeries`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AutocorrOrder {
    Exact,
    Truncated(u8),
    PoissonA2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrSeries {
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
    /// `|a(t)|²`.
    pub rho: Vec<f64>,
    pub order: AutocorrOrder,
}

impl AutocorrSeries {
    fn from_values(times: &[f64], values: Vec<Complex64>, order: AutocorrOrder) -> Self {
        let rho = values.iter().map(|a| a.norm_sqr()).collect();
        Self {
            times: times.to_vec(),
            values,
            rho,
            order,
        }
    }

    /// `max |a − b|` against another series on the same grid.
    pub fn max_abs_diff(&self, other: &AutocorrSeries) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

fn check_coeffs(ladder: &SpectralLadder, packet: &Wavepacket) -> Result<()> {
    if packet.coeffs.len() != ladder.len() {
        return Err(EchoError::InvalidInput(format!(
            "{} coefficients for {} levels",
            packet.coeffs.len(),
            ladder.len()
        )));
    }
    Ok(())
}

fn phase_sum(weights: &[(f64, f64)], t: f64, hbar: f64) -> Complex64 {
    weights
        .iter()
        .map(|&(w, e)| Complex64::from_polar(w, -t * e / hbar))
        .sum()
}

/// `a(t) = Σ |c_n|² e^{−itE_n/ħ}`.
pub fn autocorrelation(ladder: &SpectralLadder, packet: &Wavepacket, times: &[f64]) -> Result<AutocorrSeries> {
    check_coeffs(ladder, packet)?;
    let weights: Vec<(f64, f64)> = packet
        .coeffs
        .iter()
        .zip(&ladder.energies)
        .filter(|(c, _)| **c != 0.0)
        .map(|(c, &e)| (c * c, e))
        .collect();
    let values = times.iter().map(|&t| phase_sum(&weights, t, ladder.hbar)).collect();
    Ok(AutocorrSeries::from_values(times, values, AutocorrOrder::Exact))
}

/// `a_i(t) = Σ |c_n|² e^{−itκ_i(n)/ħ}` with `κ_i` the degree-`i` Taylor
/// polynomial of `E_n − E_n̄` in `m = n − n̄`:
/// `κ₁ = ħb₀′m`, `κ₂ = κ₁ + ħ²b₀″m²/2`, `κ₃ = κ₂ + ħ³b₀‴m³/6` (no `b₂′` term).
pub fn truncated_autocorr(
    order: u8,
    ladder: &SpectralLadder,
    packet: &Wavepacket,
    times: &[f64],
) -> Result<AutocorrSeries> {
    if !(1..=3).contains(&order) {
        return Err(EchoError::InvalidOrder(order));
    }
    check_coeffs(ladder, packet)?;
    let d = ladder
        .derivs
        .ok_or_else(|| EchoError::InvalidInput("ladder has no derivatives".into()))?;
    let n_bar = packet.ref_index as f64;
    let h = ladder.hbar;
    let weights: Vec<(f64, f64)> = ladder
        .indices()
        .zip(&packet.coeffs)
        .filter(|(_, c)| **c != 0.0)
        .map(|(n, c)| {
            let m = n as f64 - n_bar;
            let mut kappa = h * d.b1 * m;
            if order >= 2 {
                kappa += 0.5 * h * h * d.b2 * m * m;
            }
            if order >= 3 {
                kappa += h * h * h * d.b3 * m * m * m / 6.0;
            }
            (c * c, kappa)
        })
        .collect();
    let values = times.iter().map(|&t| phase_sum(&weights, t, h)).collect();
    Ok(AutocorrSeries::from_values(times, values, AutocorrOrder::Truncated(order)))
}

/// Poisson-resummed `a₂` for squared weights `K e^{−m²/(2σ²)}`:
/// `a₂(t) = K √(2π/γ) Σ_ℓ exp(−2π²(ℓ − t/T_cl)²/γ)`, `γ = 1/σ² + 4πit/T_rev`,
/// `K = (Σ_m e^{−m²/(2σ²)})⁻¹`. `σ` is in index units.
pub fn poisson_resummed_a2(
    times: &[f64],
    sigma: f64,
    t_rev: f64,
    t_cl: f64,
    chi1: Chi1,
) -> Result<AutocorrSeries> {
    if chi1 != Chi1::Gaussian {
        return Err(EchoError::UnsupportedCutoff);
    }
    if !(sigma > 0.0) || !(t_cl > 0.0) || t_rev.is_nan() {
        return Err(EchoError::InvalidInput("need sigma > 0, T_cl > 0".into()));
    }
    let m_max = (40.0 * sigma).ceil() as i64 + 10;
    let k = 1.0
        / (-m_max..=m_max)
            .map(|m| (-(m as f64).powi(2) / (2.0 * sigma * sigma)).exp())
            .sum::<f64>();
    let cutoff = (1e18f64).ln();
    let values = times
        .iter()
        .map(|&t| {
            let rev = if t_rev.is_infinite() { 0.0 } else { 4.0 * PI * t / t_rev };
            let gamma = Complex64::new(1.0 / (sigma * sigma), rev);
            let inv = gamma.inv();
            let s = t / t_cl;
            let reach = (cutoff / (2.0 * PI * PI * inv.re)).sqrt();
            let lo = (s - reach).floor() as i64;
            let hi = (s + reach).ceil() as i64;
            let sum: Complex64 = (lo..=hi)
                .map(|l| {
                    let x = l as f64 - s;
                    (-2.0 * PI * PI * x * x * inv).exp()
                })
                .sum();
            (Complex64::new(2.0 * PI, 0.0) * inv).sqrt() * sum * k
        })
        .collect();
    Ok(AutocorrSeries::from_values(times, values, AutocorrOrder::PoissonA2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timescales {
    /// `2π/b₀′`.
    pub t_cl: f64,
    /// `4π/(ħb₀″)`; infinite for a linear spectrum.
    pub t_rev: f64,
}

pub fn timescales(ladder: &SpectralLadder) -> Result<Timescales> {
    let d = ladder
        .derivs
        .ok_or_else(|| EchoError::InvalidInput("ladder has no derivatives".into()))?;
    if !(d.b1 > 0.0) {
        return Err(EchoError::AssumptionViolation(format!("b0' = {} is not positive", d.b1)));
    }
    let t_rev = if d.b2.abs() <= 1e-9 * d.b1 {
        f64::INFINITY
    } else {
        4.0 * PI / (ladder.hbar * d.b2)
    };
    Ok(Timescales {
        t_cl: 2.0 * PI / d.b1,
        t_rev,
    })
}

/// `[ħ^{1−2θ−δ₁}, ħ^{δ₂/2−θ}]`, requiring `δ₁, δ₂ > 0` and `δ₂ + δ₁/2 + θ < 1`.
pub fn collapse_window(hbar: f64, theta: f64, delta1: f64, delta2: f64) -> Result<(f64, f64)> {
    if !(delta1 > 0.0 && delta2 > 0.0) {
        return Err(EchoError::InvalidExponents(format!(
            "delta1 = {delta1}, delta2 = {delta2} must be positive"
        )));
    }
    if !(0.0 < theta && theta < 1.0) {
        return Err(EchoError::InvalidExponents(format!("theta = {theta} outside (0, 1)")));
    }
    let s = delta2 + 0.5 * delta1 + theta;
    if s >= 1.0 {
        return Err(EchoError::InvalidExponents(format!(
            "delta2 + delta1/2 + theta = {s} is not below 1"
        )));
    }
    if !(hbar > 0.0 && hbar < 1.0) {
        return Err(EchoError::InvalidInput(format!("hbar = {hbar} outside (0, 1)")));
    }
    let lower = hbar.powf(1.0 - 2.0 * theta - delta1);
    let upper = hbar.powf(0.5 * delta2 - theta);
    if lower >= upper {
        return Err(EchoError::DegenerateWindow { lower, upper });
    }
    Ok((lower, upper))
}
