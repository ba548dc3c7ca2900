//! Experiment runners. Each sweep item yields rows plus an optional error;
//! rows computed before a failure are kept.

use std::f64::consts::PI;

use echo_core::action::{action_and_period, turning_points, ActionOptions};
use echo_core::echo::{fidelity_leading, return_amplitude, return_overlap};
use echo_core::flow::{egorov_defect, ehrenfest_indicator, evolve, IntegratorOptions};
use echo_core::oracle::{eigensolve_1d, exact_fidelity, exact_return_amplitude, Grid1D};
use echo_core::revivals::{
    autocorrelation, bohr_sommerfeld_ladder, collapse_window, poisson_resummed_a2, timescales,
    wavepacket_coefficients, Chi1, SpectralLadder, WavepacketSpec,
};
use echo_core::{BaseModel, HamiltonianModel, PositionBump};

use crate::scenario::{LadderKind, Resolved, Scenario};
use crate::table::{flag, num, Table};

/// Rows of one sweep item, and the failure that cut it short, if any.
pub struct ItemOutput {
    pub rows: Vec<Vec<String>>,
    pub meta: Vec<(String, String)>,
    pub error: Option<String>,
}

impl ItemOutput {
    fn ok(rows: Vec<Vec<String>>) -> Self {
        Self { rows, meta: Vec::new(), error: None }
    }

    fn failed(rows: Vec<Vec<String>>, context: String, e: impl std::fmt::Display) -> Self {
        Self {
            rows,
            meta: Vec::new(),
            error: Some(format!("{context}: {e}")),
        }
    }
}

pub fn columns(experiment: crate::scenario::Experiment) -> &'static [&'static str] {
    use crate::scenario::Experiment::*;
    match experiment {
        Fidelity => &["hbar", "t", "f_semi", "f_exact", "abs_err", "ehrenfest_flag", "caustic"],
        Return => &["hbar", "t", "r_semi", "re_semi", "im_semi", "r_exact", "abs_err", "ehrenfest_flag"],
        Revival => &["hbar", "t", "rho", "rho_a2", "in_window"],
        Convergence => &["hbar", "max_err", "ehrenfest_flag"],
        Egorov => &["hbar", "defect", "ehrenfest_flag"],
        PropertyCheck => &["check", "samples", "max_defect", "tolerance", "pass"],
    }
}

pub fn fidelity_item(s: &Scenario, r: &Resolved, hbar: f64) -> ItemOutput {
    let ctx = format!("hbar={hbar}");
    let md = r.model_delta.as_ref().expect("validated");
    let times = r.times.as_ref().expect("validated");
    let semi = match fidelity_leading(&r.model0, md, &r.z0, times, hbar) {
        Ok(v) => v,
        Err(e) => return ItemOutput::failed(Vec::new(), ctx, e),
    };
    let exact = if s.oracle.enabled {
        Some(exact_fidelity(&r.model0, md, &r.z0, times, hbar, &s.oracle_config()))
    } else {
        None
    };
    let (exact_vals, error) = match exact {
        Some(Ok(e)) => (Some(e.values), None),
        Some(Err(e)) => (None, Some(format!("{ctx}: oracle: {e}"))),
        None => (None, None),
    };
    let rows = (0..times.len())
        .map(|k| {
            let f = semi.values[k];
            let fe = exact_vals.as_ref().map_or(f64::NAN, |v| v[k]);
            vec![
                num(hbar),
                num(times[k]),
                num(f),
                num(fe),
                num((f - fe).abs()),
                flag(semi.flags[k]),
                flag(semi.caustic[k]),
            ]
        })
        .collect();
    ItemOutput { rows, meta: Vec::new(), error }
}

pub fn return_item(s: &Scenario, r: &Resolved, hbar: f64) -> ItemOutput {
    let ctx = format!("hbar={hbar}");
    let times = r.times.as_ref().expect("validated");
    let semi = match return_amplitude(&r.model0, &r.z0, times, hbar) {
        Ok(v) => v,
        Err(e) => return ItemOutput::failed(Vec::new(), ctx, e),
    };
    let overlap = match return_overlap(&r.model0, &r.z0, times, hbar) {
        Ok(v) => v,
        Err(e) => return ItemOutput::failed(Vec::new(), ctx, e),
    };
    let (exact_vals, error) = if s.oracle.enabled {
        match exact_return_amplitude(&r.model0, &r.z0, times, hbar, &s.oracle_config()) {
            Ok(e) => (Some(e.values), None),
            Err(e) => (None, Some(format!("{ctx}: oracle: {e}"))),
        }
    } else {
        (None, None)
    };
    let rows = (0..times.len())
        .map(|k| {
            let a = semi.values[k];
            let ae = exact_vals.as_ref().map_or(f64::NAN, |v| v[k]);
            vec![
                num(hbar),
                num(times[k]),
                num(a),
                num(overlap[k].re),
                num(overlap[k].im),
                num(ae),
                num((a - ae).abs()),
                flag(semi.flags[k]),
            ]
        })
        .collect();
    ItemOutput { rows, meta: Vec::new(), error }
}

pub fn convergence_item(s: &Scenario, r: &Resolved, hbar: f64) -> ItemOutput {
    let ctx = format!("hbar={hbar}");
    let md = r.model_delta.as_ref().expect("validated");
    let times = r.times.as_ref().expect("validated");
    let run = || -> echo_core::Result<(f64, bool)> {
        let semi = fidelity_leading(&r.model0, md, &r.z0, times, hbar)?;
        let exact = exact_fidelity(&r.model0, md, &r.z0, times, hbar, &s.oracle_config())?;
        Ok((semi.max_abs_diff(&exact), semi.flags.iter().any(|&f| f)))
    };
    match run() {
        Ok((err, flagged)) => ItemOutput::ok(vec![vec![num(hbar), num(err), flag(flagged)]]),
        Err(e) => ItemOutput::failed(Vec::new(), ctx, e),
    }
}

pub fn egorov_item(s: &Scenario, r: &Resolved, hbar: f64) -> ItemOutput {
    let ctx = format!("hbar={hbar}");
    let md = r.model_delta.as_ref().expect("validated");
    let e = &s.egorov;
    let bump = PositionBump { center: e.center, width: e.width };
    let opts = IntegratorOptions::default();
    let run = || -> echo_core::Result<(f64, bool)> {
        let defect = egorov_defect(&r.model0, md, &bump, &r.z0, e.t, hbar, &s.oracle_config(), &opts)?;
        let b = evolve(&r.model0, &r.z0, &[0.0, e.t], &opts)?;
        Ok((defect, ehrenfest_indicator(hbar, b.final_stability(), e.t) > 1.0))
    };
    match run() {
        Ok((d, flagged)) => ItemOutput::ok(vec![vec![num(hbar), num(d), flag(flagged)]]),
        Err(err) => ItemOutput::failed(Vec::new(), ctx, err),
    }
}

/// Grid window and size for the levels below `e_top`.
fn ladder_grid(model: &HamiltonianModel, hbar: f64, e_top: f64, levels: usize) -> echo_core::Result<Grid1D> {
    let opts = ActionOptions::default();
    let floor = model.split_potential(0.0).map_or(0.0, |v| v.0);
    let e_edge = e_top + 0.5 * (e_top - floor).abs().max(0.5);
    let (lo, hi) = match turning_points(model, e_edge, &opts) {
        Ok((a, b)) => {
            let pad = 0.15 * (b - a);
            (a - pad, b + pad)
        }
        Err(_) if matches!(model.base(), BaseModel::Pendulum) => (-PI, PI),
        Err(e) => return Err(e),
    };
    let p_max = (2.0 * (e_top - floor).max(0.0)).sqrt().max(hbar.sqrt());
    let by_momentum = ((hi - lo) * p_max / (0.7 * PI * hbar) * 1.2).ceil() as usize;
    let n = by_momentum.max(4 * levels).max(256).next_power_of_two();
    Grid1D::new(lo, hi, n, hbar)
}

fn build_ladder(s: &Scenario, model: &HamiltonianModel, hbar: f64, e_c: f64) -> echo_core::Result<SpectralLadder> {
    let eps = hbar.powf(s.revival.theta_prime);
    let e_top = e_c + 1.2 * eps;
    match s.revival.ladder {
        LadderKind::BohrSommerfeld => bohr_sommerfeld_ladder(model, hbar, (e_c - 1.2 * eps, e_top), e_c),
        LadderKind::Grid => {
            let levels = match s.revival.levels {
                Some(n) => n,
                None => (action_and_period(model, e_top)?.action / (2.0 * PI * hbar)).ceil() as usize + 8,
            };
            let grid = match s.oracle_config().grid {
                Some((a, b, n)) => Grid1D::new(a, b, n, hbar)?,
                None => ladder_grid(model, hbar, e_top, levels)?,
            };
            let ladder = eigensolve_1d(model, hbar, &grid, levels)?;
            let n_bar = ladder.nearest_index(e_c).expect("non-empty");
            ladder.with_classical_reference(model, n_bar, &ActionOptions::default())
        }
    }
}

pub fn revival_item(s: &Scenario, r: &Resolved, hbar: f64) -> ItemOutput {
    let ctx = format!("hbar={hbar}");
    let rv = &s.revival;
    let e_c = rv.center_energy.unwrap_or_else(|| r.model0.value(r.z0.as_slice()));
    let mut meta = Vec::new();
    let run = |meta: &mut Vec<(String, String)>| -> echo_core::Result<Vec<Vec<String>>> {
        let ladder = build_ladder(s, &r.model0, hbar, e_c)?;
        let ts = timescales(&ladder)?;
        let mut spec = WavepacketSpec::new(e_c);
        spec.theta = rv.theta;
        spec.theta_prime = rv.theta_prime;
        spec.chi1 = rv.chi1().expect("validated");
        spec.form = rv.form().expect("validated");
        let packet = wavepacket_coefficients(&ladder, &spec)?;
        let window = collapse_window(hbar, rv.theta, rv.window[0], rv.window[1]).ok();
        let times = match &r.times {
            Some(t) => t.clone(),
            None => {
                if !ts.t_rev.is_finite() {
                    return Err(echo_core::EchoError::InvalidInput(
                        "T_rev is infinite; give explicit times".into(),
                    ));
                }
                echo_core::flow::uniform_times(1.05 * ts.t_rev.abs(), rv.samples)
            }
        };
        let a = autocorrelation(&ladder, &packet, &times)?;
        let a2 = match (spec.chi1, packet.sigma_index) {
            (Chi1::Gaussian, Some(sigma)) => Some(poisson_resummed_a2(&times, sigma, ts.t_rev, ts.t_cl, spec.chi1)?.rho),
            _ => None,
        };
        meta.push(("t_cl".into(), num(ts.t_cl)));
        meta.push(("t_rev".into(), num(ts.t_rev)));
        meta.push(("center_energy".into(), num(e_c)));
        meta.push(("ref_index".into(), packet.ref_index.to_string()));
        meta.push(("levels".into(), ladder.len().to_string()));
        if let Some((lo, hi)) = window {
            meta.push(("window_lo".into(), num(lo)));
            meta.push(("window_hi".into(), num(hi)));
        }
        Ok((0..times.len())
            .map(|k| {
                let t = times[k];
                let inside = window.is_some_and(|(lo, hi)| t >= lo && t <= hi);
                vec![
                    num(hbar),
                    num(t),
                    num(a.rho[k]),
                    num(a2.as_ref().map_or(f64::NAN, |v| v[k])),
                    flag(inside),
                ]
            })
            .collect())
    };
    match run(&mut meta) {
        Ok(rows) => ItemOutput { rows, meta, error: None },
        Err(e) => ItemOutput { rows: Vec::new(), meta, error: Some(format!("{ctx}: {e}")) },
    }
}

/// Least-squares slope of `log y` against `log x` over positive finite pairs.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Fills a table from sweep items in order; returns the collected errors.
pub fn assemble(table: &mut Table, items: Vec<ItemOutput>) -> Vec<String> {
    let mut errors = Vec::new();
    for item in items {
        for (k, v) in item.meta {
            table.push_meta(&k, v);
        }
        for row in item.rows {
            table.push(row);
        }
        if let Some(e) = item.error {
            errors.push(e);
        }
    }
    errors
}
