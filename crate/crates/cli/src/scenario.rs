//! Scenario files: TOML, every key documented in the README, unknown keys rejected.

use std::path::Path;

use echo_core::{BaseModel, HamiltonianModel, Perturbation, PhaseVector};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Fidelity,
    Return,
    Revival,
    Convergence,
    Egorov,
    PropertyCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fidelity => "fidelity",
            Experiment::Return => "return",
            Experiment::Revival => "revival",
            Experiment::Convergence => "convergence",
            Experiment::Egorov => "egorov",
            Experiment::PropertyCheck => "property-check",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hbar: Option<HbarSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<TimesSpec>,
    #[serde(default)]
    pub revival: RevivalSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub egorov: EgorovSpec,
    #[serde(default)]
    pub check: CheckSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HbarSpec {
    One(f64),
    Sweep(Vec<f64>),
}

impl HbarSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            HbarSpec::One(h) => vec![*h],
            HbarSpec::Sweep(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// free, harmonic, quartic, anharmonic, pendulum, double-well, quadratic
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Row-major `2d × 2d` matrix for `quadratic`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    /// linear, quadratic, cosine, linear-form, quadratic-form
    pub name: String,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimesSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LadderKind {
    Grid,
    BohrSommerfeld,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RevivalSpec {
    #[serde(default = "d_theta")]
    pub theta: f64,
    #[serde(default = "d_theta_prime")]
    pub theta_prime: f64,
    /// `(δ₁, δ₂)` of the collapse window.
    #[serde(default = "d_window")]
    pub window: [f64; 2],
    /// Defaults to `H(z0)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_energy: Option<f64>,
    #[serde(default = "d_ladder")]
    pub ladder: LadderKind,
    /// gaussian or sech
    #[serde(default = "d_chi1")]
    pub chi1: String,
    /// energy or index
    #[serde(default = "d_form")]
    pub form: String,
    /// Number of levels for the grid ladder; estimated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    /// Number of samples when `times` is absent (uniform on `[0, 1.05 T_rev]`).
    #[serde(default = "d_samples")]
    pub samples: usize,
}

fn d_theta() -> f64 {
    0.8
}
fn d_theta_prime() -> f64 {
    0.4
}
fn d_window() -> [f64; 2] {
    [0.1, 0.1]
}
fn d_ladder() -> LadderKind {
    LadderKind::Grid
}
fn d_chi1() -> String {
    "gaussian".into()
}
fn d_form() -> String {
    "energy".into()
}
fn d_samples() -> usize {
    20_001
}

impl Default for RevivalSpec {
    fn default() -> Self {
        Self {
            theta: d_theta(),
            theta_prime: d_theta_prime(),
            window: d_window(),
            center_energy: None,
            ladder: d_ladder(),
            chi1: d_chi1(),
            form: d_form(),
            levels: None,
            samples: d_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    /// Compute the exact grid reference (fidelity, return).
    #[serde(default = "d_true")]
    pub enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default = "d_dt")]
    pub dt_max: f64,
    #[serde(default = "d_margin")]
    pub margin: f64,
    #[serde(default = "d_boundary")]
    pub boundary_tol: f64,
}

fn d_true() -> bool {
    true
}
fn d_dt() -> f64 {
    1e-3
}
fn d_margin() -> f64 {
    10.0
}
fn d_boundary() -> f64 {
    1e-12
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            q_min: None,
            q_max: None,
            points: None,
            dt_max: d_dt(),
            margin: d_margin(),
            boundary_tol: d_boundary(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgorovSpec {
    /// Observable `exp(−(q − center)²/(2 width²))`.
    #[serde(default = "d_one")]
    pub center: f64,
    #[serde(default = "d_one")]
    pub width: f64,
    #[serde(default = "d_one")]
    pub t: f64,
}

fn d_one() -> f64 {
    1.0
}

impl Default for EgorovSpec {
    fn default() -> Self {
        Self {
            center: 1.0,
            width: 1.0,
            t: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    #[serde(default = "d_check_samples")]
    pub samples: usize,
}

fn d_check_samples() -> usize {
    1000
}

impl Default for CheckSpec {
    fn default() -> Self {
        Self {
            samples: d_check_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Output directory; `--out` takes precedence. Defaults to `out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// File stem; defaults to the experiment name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Also write an SVG plot of the table.
    #[serde(default)]
    pub plot: bool,
}

fn invalid(field: impl Into<String>, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{}: {msg}", field.into()))
}

pub fn load(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Scenario, CliError> {
    let s: Scenario = toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
    s.validate()?;
    Ok(s)
}

fn matrix_from(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    if n == 0 || n % 2 != 0 || rows.iter().any(|r| r.len() != n) {
        return Err(invalid(field, "must be a square 2d x 2d matrix"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(invalid(field, "entries must be finite"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn finite_positive(v: f64, field: &str) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and positive, got {v}")))
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<HamiltonianModel, CliError> {
        let allow = |omega: bool, alpha: bool, matrix: bool| -> Result<(), CliError> {
            for (present, ok, key) in [
                (self.omega.is_some(), omega, "omega"),
                (self.alpha.is_some(), alpha, "alpha"),
                (self.matrix.is_some(), matrix, "matrix"),
            ] {
                if present && !ok {
                    return Err(invalid(format!("model.{key}"), format!("not a parameter of '{}'", self.name)));
                }
            }
            Ok(())
        };
        let base = match self.name.as_str() {
            "free" => {
                allow(false, false, false)?;
                BaseModel::Free
            }
            "harmonic" => {
                allow(true, false, false)?;
                let omega = self.omega.unwrap_or(1.0);
                finite_positive(omega, "model.omega")?;
                BaseModel::Harmonic { omega }
            }
            "quartic" => {
                allow(false, false, false)?;
                BaseModel::Quartic
            }
            "anharmonic" => {
                allow(false, true, false)?;
                let alpha = self.alpha.ok_or_else(|| invalid("model.alpha", "required for 'anharmonic'"))?;
                if !(alpha.is_finite() && alpha >= 0.0) {
                    return Err(invalid("model.alpha", format!("must be finite and non-negative, got {alpha}")));
                }
                BaseModel::Anharmonic { alpha }
            }
            "pendulum" => {
                allow(false, false, false)?;
                BaseModel::Pendulum
            }
            "double-well" => {
                allow(false, false, false)?;
                BaseModel::DoubleWell
            }
            "quadratic" => {
                allow(false, false, true)?;
                let rows = self.matrix.as_ref().ok_or_else(|| invalid("model.matrix", "required for 'quadratic'"))?;
                BaseModel::Quadratic {
                    matrix: matrix_from(rows, "model.matrix")?,
                }
            }
            other => return Err(invalid("model.name", format!("unknown model '{other}'"))),
        };
        HamiltonianModel::new(base).map_err(|e| invalid("model", e))
    }
}

impl PerturbationSpec {
    pub fn build(&self) -> Result<(Perturbation, f64), CliError> {
        if !self.delta.is_finite() {
            return Err(invalid("perturbation.delta", "must be finite"));
        }
        let p = match self.name.as_str() {
            "linear" => Perturbation::Linear,
            "quadratic" => Perturbation::Quadratic,
            "cosine" => Perturbation::Cosine,
            "linear-form" => {
                let c = self.coeffs.as_ref().ok_or_else(|| invalid("perturbation.coeffs", "required for 'linear-form'"))?;
                Perturbation::LinearForm {
                    coeffs: DVector::from_column_slice(c),
                }
            }
            "quadratic-form" => {
                let rows = self
                    .matrix
                    .as_ref()
                    .ok_or_else(|| invalid("perturbation.matrix", "required for 'quadratic-form'"))?;
                Perturbation::QuadraticForm {
                    matrix: matrix_from(rows, "perturbation.matrix")?,
                }
            }
            other => return Err(invalid("perturbation.name", format!("unknown perturbation '{other}'"))),
        };
        if self.coeffs.is_some() && self.name != "linear-form" {
            return Err(invalid("perturbation.coeffs", format!("not a parameter of '{}'", self.name)));
        }
        if self.matrix.is_some() && self.name != "quadratic-form" {
            return Err(invalid("perturbation.matrix", format!("not a parameter of '{}'", self.name)));
        }
        Ok((p, self.delta))
    }
}

impl TimesSpec {
    pub fn resolve(&self) -> Result<Vec<f64>, CliError> {
        match (&self.list, self.t_max, self.n_samples) {
            (Some(list), None, None) => {
                if list.is_empty() {
                    return Err(invalid("times.list", "must not be empty"));
                }
                for (k, t) in list.iter().enumerate() {
                    if !t.is_finite() || *t < 0.0 {
                        return Err(invalid(format!("times.list[{k}]"), format!("must be finite and >= 0, got {t}")));
                    }
                    if k > 0 && *t <= list[k - 1] {
                        return Err(invalid(format!("times.list[{k}]"), "must be strictly increasing"));
                    }
                }
                Ok(list.clone())
            }
            (None, Some(t_max), Some(n)) => {
                finite_positive(t_max, "times.t_max")?;
                if n < 2 {
                    return Err(invalid("times.n_samples", format!("must be at least 2, got {n}")));
                }
                Ok(echo_core::flow::uniform_times(t_max, n))
            }
            (Some(_), _, _) => Err(invalid("times", "give either 'list' or 't_max' with 'n_samples', not both")),
            (None, None, _) => Err(invalid("times.t_max", "required")),
            (None, Some(_), None) => Err(invalid("times.n_samples", "required")),
        }
    }
}

impl RevivalSpec {
    pub fn chi1(&self) -> Result<echo_core::revivals::Chi1, CliError> {
        match self.chi1.as_str() {
            "gaussian" => Ok(echo_core::revivals::Chi1::Gaussian),
            "sech" => Ok(echo_core::revivals::Chi1::Sech),
            other => Err(invalid("revival.chi1", format!("expected 'gaussian' or 'sech', got '{other}'"))),
        }
    }

    pub fn form(&self) -> Result<echo_core::revivals::CoefficientForm, CliError> {
        match self.form.as_str() {
            "energy" => Ok(echo_core::revivals::CoefficientForm::Energy),
            "index" => Ok(echo_core::revivals::CoefficientForm::Index),
            other => Err(invalid("revival.form", format!("expected 'energy' or 'index', got '{other}'"))),
        }
    }
}

/// Everything an experiment needs, resolved and checked.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model0: HamiltonianModel,
    pub model_delta: Option<HamiltonianModel>,
    pub z0: PhaseVector,
    pub hbars: Vec<f64>,
    pub times: Option<Vec<f64>>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.experiment == Experiment::PropertyCheck {
            if self.check.samples == 0 {
                return Err(invalid("check.samples", "must be positive"));
            }
            return Ok(());
        }
        self.resolve().map(|_| ())
    }

    fn needs_perturbation(&self) -> bool {
        matches!(
            self.experiment,
            Experiment::Fidelity | Experiment::Convergence | Experiment::Egorov
        )
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let model0 = self
            .model
            .as_ref()
            .ok_or_else(|| invalid("model", "required"))?
            .build()?;
        let model_delta = match (&self.perturbation, self.needs_perturbation()) {
            (Some(p), true) => {
                let (shape, delta) = p.build()?;
                Some(
                    model0
                        .clone()
                        .with_perturbation(shape, delta)
                        .map_err(|e| invalid("perturbation", e))?,
                )
            }
            (None, true) => return Err(invalid("perturbation", format!("required for '{}'", self.experiment.name()))),
            (Some(_), false) => {
                return Err(invalid("perturbation", format!("not used by '{}'", self.experiment.name())))
            }
            (None, false) => None,
        };
        let z = self.z0.as_ref().ok_or_else(|| invalid("z0", "required"))?;
        if z.len() != 2 * model0.dim() {
            return Err(invalid("z0", format!("expected {} entries, got {}", 2 * model0.dim(), z.len())));
        }
        if let Some(k) = z.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("z0[{k}]"), "must be finite"));
        }
        let hbars = self.hbar.as_ref().ok_or_else(|| invalid("hbar", "required"))?.values();
        if hbars.is_empty() {
            return Err(invalid("hbar", "sweep must not be empty"));
        }
        for (k, h) in hbars.iter().enumerate() {
            finite_positive(*h, &format!("hbar[{k}]"))?;
        }
        if self.experiment == Experiment::Convergence && hbars.len() < 2 {
            return Err(invalid("hbar", "convergence needs a sweep of at least two values"));
        }
        let times = match (&self.times, self.experiment) {
            (Some(_), Experiment::Egorov) => return Err(invalid("times", "not used by 'egorov'; set egorov.t")),
            (Some(t), _) => Some(t.resolve()?),
            (None, Experiment::Revival | Experiment::Egorov) => None,
            (None, _) => return Err(invalid("times", "required")),
        };
        let one_d = model0.dim() == 1;
        match self.experiment {
            Experiment::Revival => {
                if !one_d {
                    return Err(invalid("model", "revival ladders need a one-dimensional model"));
                }
                let r = &self.revival;
                if !(r.theta > 0.0 && r.theta < 1.0) {
                    return Err(invalid("revival.theta", "must lie in (0, 1)"));
                }
                if !(r.theta_prime > 0.0 && r.theta_prime < r.theta) {
                    return Err(invalid("revival.theta_prime", "must lie in (0, theta)"));
                }
                if !(r.window[0] > 0.0 && r.window[1] > 0.0) {
                    return Err(invalid("revival.window", "both exponents must be positive"));
                }
                if r.samples < 2 {
                    return Err(invalid("revival.samples", "must be at least 2"));
                }
                if let Some(e) = r.center_energy {
                    if !e.is_finite() {
                        return Err(invalid("revival.center_energy", "must be finite"));
                    }
                }
                r.chi1()?;
                r.form()?;
            }
            Experiment::Egorov => {
                finite_positive(self.egorov.width, "egorov.width")?;
                finite_positive(self.egorov.t, "egorov.t")?;
                if !self.egorov.center.is_finite() {
                    return Err(invalid("egorov.center", "must be finite"));
                }
                if !one_d {
                    return Err(invalid("model", "the grid oracle is one-dimensional"));
                }
            }
            _ => {}
        }
        let oracle_used = match self.experiment {
            Experiment::Fidelity | Experiment::Return => self.oracle.enabled,
            Experiment::Convergence | Experiment::Egorov => {
                if !self.oracle.enabled {
                    return Err(invalid("oracle.enabled", format!("'{}' needs the oracle", self.experiment.name())));
                }
                true
            }
            _ => false,
        };
        if oracle_used && !one_d {
            return Err(invalid("oracle.enabled", "the grid oracle is one-dimensional; set it to false"));
        }
        self.validate_oracle()?;
        Ok(Resolved {
            model0,
            model_delta,
            z0: PhaseVector::from_slice(z),
            hbars,
            times,
        })
    }

    fn validate_oracle(&self) -> Result<(), CliError> {
        let o = &self.oracle;
        finite_positive(o.dt_max, "oracle.dt_max")?;
        finite_positive(o.margin, "oracle.margin")?;
        finite_positive(o.boundary_tol, "oracle.boundary_tol")?;
        match (o.q_min, o.q_max, o.points) {
            (None, None, None) => Ok(()),
            (Some(a), Some(b), Some(n)) => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(invalid("oracle.q_min", "need finite q_min < q_max"));
                }
                if n < 256 || !n.is_power_of_two() {
                    return Err(invalid("oracle.points", format!("must be a power of two >= 256, got {n}")));
                }
                Ok(())
            }
            _ => Err(invalid("oracle", "q_min, q_max and points must be given together")),
        }
    }

    pub fn oracle_config(&self) -> echo_core::oracle::OracleConfig {
        let o = &self.oracle;
        echo_core::oracle::OracleConfig {
            grid: match (o.q_min, o.q_max, o.points) {
                (Some(a), Some(b), Some(n)) => Some((a, b, n)),
                _ => None,
            },
            dt_max: o.dt_max,
            boundary_tol: o.boundary_tol,
            margin: o.margin,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIDELITY: &str = r#"
experiment = "fidelity"
z0 = [1.0, 0.0]
hbar = 0.01

[model]
name = "harmonic"

[perturbation]
name = "linear"
delta = 0.05

[times]
t_max = 12.0
n_samples = 11
"#;

    #[test]
    fn parses_and_resolves() {
        let s = parse(FIDELITY).unwrap();
        let r = s.resolve().unwrap();
        assert_eq!(r.hbars, vec![0.01]);
        assert_eq!(r.times.unwrap().len(), 11);
        assert!(r.model_delta.is_some());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let bad = FIDELITY.replace("delta = 0.05", "delta = 0.05\ndetla = 1.0");
        let err = parse(&bad).unwrap_err().to_string();
        assert!(err.contains("detla"), "{err}");
        let bad = FIDELITY.replace("hbar = 0.01", "hbar = 0.01\nhbr = 2");
        assert!(parse(&bad).is_err());
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            (FIDELITY.replace("hbar = 0.01", "hbar = [0.1, -0.2]"), "hbar[1]"),
            (FIDELITY.replace("n_samples = 11", "n_samples = 1"), "times.n_samples"),
            (FIDELITY.replace("\"harmonic\"", "\"harmonik\""), "model.name"),
            (FIDELITY.replace("z0 = [1.0, 0.0]", "z0 = [1.0]"), "z0"),
            (FIDELITY.replace("name = \"harmonic\"", "name = \"harmonic\"\nalpha = 1.0"), "model.alpha"),
        ];
        for (text, field) in cases {
            let err = parse(&text).unwrap_err().to_string();
            assert!(err.contains(field), "{field}: {err}");
        }
    }

    #[test]
    fn round_trips_through_json() {
        let s = parse(FIDELITY).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
    }
}
