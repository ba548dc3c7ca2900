//! Action integrals and periods of one-dimensional orbits `p²/2 + U(q) = E`.

use crate::error::{EchoError, Result};
use crate::models::HamiltonianModel;
use crate::quadrature::integrate;

/// Search settings for the turning points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionOptions {
    /// Point inside the classically allowed interval from which the turning
    /// points are searched outwards.
    pub center: f64,
    /// The search gives up (non-confining) beyond this distance.
    pub search_limit: f64,
    pub rel_tol: f64,
}

impl Default for ActionOptions {
    fn default() -> Self {
        Self {
            center: 0.0,
            search_limit: 1e6,
            rel_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionPeriod {
    /// Enclosed phase-space area `𝒥(E)`.
    pub action: f64,
    /// `T(E) = 𝒥′(E)`.
    pub period: f64,
    pub turning_points: (f64, f64),
}

fn potential(model: &HamiltonianModel) -> Result<impl Fn(f64) -> (f64, f64, f64) + '_> {
    if !model.is_splittable() {
        return Err(EchoError::UnsupportedModel(format!(
            "{model:?} is not of the form p^2/2 + U(q)"
        )));
    }
    Ok(move |q| model.split_potential(q).expect("splittable"))
}

/// Turning points `q₋ < center < q₊` with `U(q±) = E`.
pub fn turning_points(model: &HamiltonianModel, energy: f64, opts: &ActionOptions) -> Result<(f64, f64)> {
    let u = potential(model)?;
    let c = opts.center;
    let (uc, duc, _) = u(c);
    let scale = 1.0 + energy.abs().max(uc.abs());
    if energy - uc <= 1e-14 * scale {
        if (energy - uc).abs() <= 1e-14 * scale && duc.abs() <= 1e-12 {
            return Err(EchoError::SingularOrbit { energy });
        }
        return Err(EchoError::NonConfining { energy });
    }
    let mut ends = [0.0; 2];
    for (slot, dir) in [-1.0f64, 1.0].into_iter().enumerate() {
        let mut inner = c;
        let mut step = 1e-2 * (1.0 + c.abs());
        let outer = loop {
            let q = inner + dir * step;
            if (q - c).abs() > opts.search_limit {
                return Err(EchoError::NonConfining { energy });
            }
            if u(q).0 >= energy {
                break q;
            }
            inner = q;
            step *= 1.2;
        };
        ends[slot] = bisect(|q| u(q).0 - energy, inner, outer);
    }
    for &q in &ends {
        let (_, du, _) = u(q);
        if du.abs() <= 1e-9 * scale {
            return Err(EchoError::SingularOrbit { energy });
        }
    }
    Ok((ends[0], ends[1]))
}

/// Root of `g` between `a` (`g < 0`) and `b` (`g ≥ 0`), to machine precision.
fn bisect(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if g(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// `E − U(q)` at `q = mid + half·sin u`, with a Taylor expansion about the
/// nearer turning point to avoid cancellation at the ends.
fn kinetic_at(
    u_fn: &impl Fn(f64) -> (f64, f64, f64),
    energy: f64,
    ends: (f64, f64),
    ends_data: [(f64, f64); 2],
    u: f64,
) -> f64 {
    let mid = 0.5 * (ends.0 + ends.1);
    let half = 0.5 * (ends.1 - ends.0);
    let s = u.sin();
    let c2 = u.cos().powi(2);
    // distance to the nearer end, computed without cancellation
    let (dist, which) = if s >= 0.0 {
        (half * c2 / (1.0 + s), 1)
    } else {
        (half * c2 / (1.0 - s), 0)
    };
    if dist < 1e-5 * half {
        let (du, ddu) = ends_data[which];
        // signed step from the end into the allowed region
        let h = if which == 1 { -dist } else { dist };
        -(du * h + 0.5 * ddu * h * h)
    } else {
        energy - u_fn(mid + half * s).0
    }
}

/// `𝒥(E) = 2∫√(2(E − U)) dq` and `T(E) = 2∫dq/√(2(E − U))` over the allowed
/// interval, with the substitution `q = mid + half·sin u` removing the
/// endpoint singularities.
pub fn action_and_period_with(
    model: &HamiltonianModel,
    energy: f64,
    opts: &ActionOptions,
) -> Result<ActionPeriod> {
    let ends = turning_points(model, energy, opts)?;
    let u_fn = potential(model)?;
    let data = {
        let (_, d0, dd0) = u_fn(ends.0);
        let (_, d1, dd1) = u_fn(ends.1);
        [(d0, dd0), (d1, dd1)]
    };
    let half = 0.5 * (ends.1 - ends.0);
    let hp = std::f64::consts::FRAC_PI_2;
    let action = integrate(
        |u| {
            let k = kinetic_at(&u_fn, energy, ends, data, u).max(0.0);
            2.0 * (2.0 * k).sqrt() * half * u.cos()
        },
        -hp,
        hp,
        0.0,
        opts.rel_tol,
    );
    let period = integrate(
        |u| {
            let k = kinetic_at(&u_fn, energy, ends, data, u);
            let c = u.cos();
            if k <= 0.0 || c <= 0.0 {
                // endpoint limit √(half (1 ± sin u) / (2|U′|)) · 2
                let which = if u > 0.0 { 1 } else { 0 };
                let du = data[which].0.abs();
                return 2.0 * (half * (1.0 + u.sin().abs()) / (2.0 * du)).sqrt();
            }
            2.0 * half * c / (2.0 * k).sqrt()
        },
        -hp,
        hp,
        0.0,
        opts.rel_tol,
    );
    let check = |x: f64| x.is_finite() && x > 0.0;
    if !check(action.value) || !check(period.value) {
        return Err(EchoError::SingularOrbit { energy });
    }
    Ok(ActionPeriod {
        action: action.value,
        period: period.value,
        turning_points: ends,
    })
}

/// [`action_and_period_with`] searching from `q = 0`.
pub fn action_and_period(model: &HamiltonianModel, energy: f64) -> Result<ActionPeriod> {
    action_and_period_with(model, energy, &ActionOptions::default())
}

/// `𝒥′(E)` from the derivative of the degree-4 interpolating polynomial of
/// `𝒥` on five equispaced energies around `E` (spacing `step`).
pub fn action_derivative_fit(
    model: &HamiltonianModel,
    energy: f64,
    step: f64,
    opts: &ActionOptions,
) -> Result<f64> {
    let j = |k: f64| action_and_period_with(model, energy + k * step, opts).map(|a| a.action);
    let (m2, m1, p1, p2) = (j(-2.0)?, j(-1.0)?, j(1.0)?, j(2.0)?);
    Ok((m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * step))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{evolve, IntegratorOptions};
    use crate::phase::PhaseVector;
    use std::f64::consts::PI;

    #[test]
    fn harmonic_circle() {
        let a = action_and_period(&HamiltonianModel::harmonic(1.0), 1.0).unwrap();
        assert!((a.action - 2.0 * PI).abs() < 1e-10);
        assert!((a.period - 2.0 * PI).abs() < 1e-10);
        let w = action_and_period(&HamiltonianModel::harmonic(2.0), 1.0).unwrap();
        assert!((w.action - PI).abs() < 1e-10 && (w.period - PI).abs() < 1e-10);
    }

    #[test]
    fn quartic_scaling() {
        let m = HamiltonianModel::quartic();
        let a1 = action_and_period(&m, 1.0).unwrap();
        let a16 = action_and_period(&m, 16.0).unwrap();
        assert!((a16.action / a1.action - 8.0).abs() < 1e-6);
        // T = 𝒥′ and 𝒥 ∝ E^{3/4} give T = (3/4) 𝒥 / E
        assert!((a1.period - 0.75 * a1.action).abs() < 1e-9);
    }

    #[test]
    fn fit_matches_period() {
        for (m, e) in [
            (HamiltonianModel::quartic(), 0.7),
            (HamiltonianModel::pendulum(), -0.3),
            (HamiltonianModel::double_well(), 0.4),
        ] {
            let ap = action_and_period(&m, e).unwrap();
            let fit = action_derivative_fit(&m, e, 1e-3, &ActionOptions::default()).unwrap();
            assert!((fit - ap.period).abs() < 1e-6 * ap.period, "{m:?}: {fit} vs {}", ap.period);
        }
    }

    #[test]
    fn pendulum_period_matches_orbit_integration() {
        let m = HamiltonianModel::pendulum();
        let e = -0.5;
        let ap = action_and_period(&m, e).unwrap();
        // start at q = 0 moving right; the orbit next crosses q = 0 upwards after one period
        let p0 = (2.0 * (e + 1.0)).sqrt();
        let z0 = PhaseVector::new(&[0.0], &[p0]);
        let q_at = |t: f64| {
            evolve(&m, &z0, &[0.0, t], &IntegratorOptions::default())
                .unwrap()
                .final_point()[0]
        };
        let (mut a, mut b) = (0.9 * ap.period, 1.1 * ap.period);
        assert!(q_at(a) < 0.0 && q_at(b) > 0.0);
        for _ in 0..60 {
            let m = 0.5 * (a + b);
            if q_at(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        assert!((0.5 * (a + b) - ap.period).abs() < 1e-6);
        // exact value 4 K(k), k² = (1 + E)/2
        let k2: f64 = 0.25;
        let mut agm = (1.0, (1.0 - k2).sqrt());
        for _ in 0..30 {
            agm = (0.5 * (agm.0 + agm.1), (agm.0 * agm.1).sqrt());
        }
        let exact = 4.0 * PI / (2.0 * agm.0);
        assert!((ap.period - exact).abs() < 1e-10);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            action_and_period(&HamiltonianModel::free(), 1.0),
            Err(EchoError::NonConfining { .. })
        ));
        assert!(matches!(
            action_and_period(&HamiltonianModel::double_well(), 0.0),
            Err(EchoError::SingularOrbit { .. })
        ));
        assert!(matches!(
            action_and_period(&HamiltonianModel::pendulum(), 1.0),
            Err(EchoError::SingularOrbit { .. }) | Err(EchoError::NonConfining { .. })
        ));
        assert!(matches!(
            action_and_period(&HamiltonianModel::harmonic(1.0), 0.0),
            Err(EchoError::SingularOrbit { .. })
        ));
    }
}
