use std::path::Path;
use std::process::{Command, Output};

use echo_cli::table::Table;

fn echo_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_echo-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const FIDELITY: &str = r#"
experiment = "fidelity"
z0 = [1.0, 0.0]
hbar = [0.01, 0.02]

[model]
name = "harmonic"

[perturbation]
name = "linear"
delta = 0.05

[times]
t_max = 12.566370614359172
n_samples = 33
"#;

#[test]
fn fidelity_table_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write(dir.path(), "f.toml", FIDELITY);
    let out = dir.path().join("out");
    let o = echo_lab(&["run", &scen, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = Table::read(&out.join("fidelity.csv")).unwrap();
    assert_eq!(t.meta("status"), Some("complete"));
    assert_eq!(t.rows.len(), 66);
    let (h, time, semi, exact, err) = (
        t.column("hbar").unwrap(),
        t.column("t").unwrap(),
        t.column("f_semi").unwrap(),
        t.column("f_exact").unwrap(),
        t.column("abs_err").unwrap(),
    );
    for k in 0..t.rows.len() {
        let closed = (-2.0 * 0.05f64.powi(2) * (time[k] / 2.0).sin().powi(2) / h[k]).exp();
        assert!((semi[k] - closed).abs() < 1e-10);
        assert!((exact[k] - closed).abs() < 1e-6);
        assert!(err[k] < 1e-6);
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("fidelity.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["manifest_sha256"].as_str(), t.meta("manifest_sha256"));
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["config"]["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(
        echo_cli::config_digest(&manifest["config"]),
        manifest["manifest_sha256"].as_str().unwrap()
    );
}

#[test]
fn tables_do_not_depend_on_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write(dir.path(), "f.toml", FIDELITY);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(echo_lab(&["run", &scen, "--jobs", "4", "--out", a.to_str().unwrap()]).status.success());
    assert!(echo_lab(&["run", &scen, "--deterministic", "--out", b.to_str().unwrap()]).status.success());
    let ta = std::fs::read(a.join("fidelity.csv")).unwrap();
    let tb = std::fs::read(b.join("fidelity.csv")).unwrap();
    assert_eq!(ta, tb);
}

#[test]
fn validation_errors_exit_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cases = [
        (FIDELITY.replace("delta = 0.05", "delta = 0.05\ndelat = 1"), "delat"),
        (FIDELITY.replace("hbar = [0.01, 0.02]", "hbar = [0.01, 0.0]"), "hbar[1]"),
        (FIDELITY.replace("n_samples = 33", "n_samples = 0"), "times.n_samples"),
        (FIDELITY.replace("name = \"linear\"", "name = \"cubic\""), "perturbation.name"),
    ];
    for (text, field) in cases {
        let scen = write(dir.path(), "bad.toml", &text);
        let o = echo_lab(&["run", &scen, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2));
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(field), "{field}: {err}");
    }
    let o = echo_lab(&["run", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_keeps_partial_rows() {
    let dir = tempfile::tempdir().unwrap();
    // the grid is too narrow for a packet centred at q = 1
    let text = format!("{FIDELITY}\n[oracle]\nq_min = -0.5\nq_max = 0.5\npoints = 256\n");
    let scen = write(dir.path(), "f.toml", &text);
    let out = dir.path().join("out");
    let o = echo_lab(&["run", &scen, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let t = Table::read(&out.join("fidelity.csv")).unwrap();
    assert_eq!(t.meta("status"), Some("partial"));
    assert!(t.meta("error").unwrap().contains("hbar=0.01"));
    let semi = t.column("f_semi").unwrap();
    let exact = t.column("f_exact").unwrap();
    assert_eq!(semi.len(), 66);
    assert!(semi.iter().all(|v| v.is_finite()) && exact.iter().all(|v| v.is_nan()));
    let manifest = std::fs::read_to_string(out.join("fidelity.manifest.json")).unwrap();
    assert!(manifest.contains("\"partial\""));
}

#[test]
fn convergence_reports_slope_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
experiment = "convergence"
z0 = [1.0, 0.0]
hbar = [0.1, 0.05]

[model]
name = "quartic"

[perturbation]
name = "quadratic"
delta = 0.02

[times]
t_max = 1.0
n_samples = 11

[output]
name = "conv"
plot = true
"#;
    let scen = write(dir.path(), "c.toml", text);
    let out = dir.path().join("out");
    let o = echo_lab(&["run", &scen, "--jobs", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = Table::read(&out.join("conv.csv")).unwrap();
    assert_eq!(t.rows.len(), 2);
    let slope: f64 = t.meta("slope").unwrap().parse().unwrap();
    assert!(slope.is_finite());
    let svg = std::fs::read_to_string(out.join("conv.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("slope"));

    // a convergence table has no rho column
    let o = echo_lab(&["plot", out.join("conv.csv").to_str().unwrap(), "--kind", "rho"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing column"));
    let o = echo_lab(&[
        "plot",
        out.join("conv.csv").to_str().unwrap(),
        "--kind",
        "convergence",
        "--output",
        dir.path().join("again.svg").to_str().unwrap(),
    ]);
    assert!(o.status.success());
}

#[test]
fn revival_with_explicit_times() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
experiment = "revival"
z0 = [0.0, 1.2]
hbar = 0.01

[model]
name = "pendulum"

[revival]
ladder = "bohr-sommerfeld"

[times]
list = [0.0, 1.0, 2.0]

[output]
plot = true
"#;
    let scen = write(dir.path(), "r.toml", text);
    let out = dir.path().join("out");
    let o = echo_lab(&["run", &scen, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = Table::read(&out.join("revival.csv")).unwrap();
    let rho = t.column("rho").unwrap();
    assert!((rho[0] - 1.0).abs() < 1e-12 && rho.iter().all(|r| (0.0..=1.0 + 1e-12).contains(r)));
    assert!(t.meta("t_cl").is_some());
    assert!(out.join("revival.svg").exists());
}

#[test]
fn property_checks_pass() {
    let dir = tempfile::tempdir().unwrap();
    let scen = write(dir.path(), "p.toml", "experiment = \"property-check\"\n[check]\nsamples = 200\n");
    let out = dir.path().join("out");
    let o = echo_lab(&["run", &scen, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let t = Table::read(&out.join("property-check.csv")).unwrap();
    assert!(t.column("pass").unwrap().iter().all(|&p| p == 1.0));

    let o = echo_lab(&["check", "--samples", "200"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("det_v_lower_bound"));
}
