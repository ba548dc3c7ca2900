//! Library side of the `echo-lab` binary: scenario parsing, experiment
//! execution, table output and plotting.

pub mod check;
pub mod experiments;
pub mod plot;
pub mod scenario;
pub mod table;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

use experiments::{assemble, columns, log_log_slope, ItemOutput};
use scenario::{Experiment, Scenario};
use table::Table;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Format(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub jobs: usize,
    /// Serial execution in sweep order.
    pub deterministic: bool,
    pub out: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            deterministic: false,
            out: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Complete,
    /// Some items failed; the rows that were computed are in the table.
    Partial,
    /// Property checks ran but at least one exceeded its tolerance.
    ChecksFailed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Complete => "complete",
            RunStatus::Partial => "partial",
            RunStatus::ChecksFailed => "checks-failed",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Complete => 0,
            RunStatus::Partial | RunStatus::ChecksFailed => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub table: PathBuf,
    pub manifest: PathBuf,
    pub plot: Option<PathBuf>,
    pub status: RunStatus,
    pub errors: Vec<String>,
}

/// SHA-256 of the canonical JSON of the resolved configuration.
pub fn config_digest(config: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(config).expect("json values serialize");
    let hash = Sha256::digest(bytes);
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

fn resolved_config(s: &Scenario) -> serde_json::Value {
    json!({
        "tool": "echo-lab",
        "version": VERSION,
        "seed": s.seed,
        "scenario": s,
    })
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn run_file(path: &Path, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    let s = scenario::load(path)?;
    run_scenario(&s, opts)
}

pub fn run_scenario(s: &Scenario, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    s.validate()?;
    if opts.jobs == 0 {
        return Err(CliError::Validation("--jobs: must be at least 1".into()));
    }
    if s.experiment == Experiment::Revival {
        if let Some(h) = &s.hbar {
            if h.values().len() != 1 {
                return Err(CliError::Validation("hbar: revival takes a single value".into()));
            }
        }
    }
    let config = resolved_config(s);
    let digest = config_digest(&config);
    let out_dir = opts
        .out
        .clone()
        .or_else(|| s.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out_dir).map_err(|e| io_err(&out_dir, e))?;
    let stem = s.output.name.clone().unwrap_or_else(|| s.experiment.name().to_string());
    let table_path = out_dir.join(format!("{stem}.csv"));
    let manifest_path = out_dir.join(format!("{stem}.manifest.json"));

    let mut table = Table::new(columns(s.experiment));
    table.push_meta("tool", format!("echo-lab {VERSION}"));
    table.push_meta("experiment", s.experiment.name());
    table.push_meta("manifest_sha256", &digest);
    table.push_meta("status", "running");

    let (status, errors) = if s.experiment == Experiment::PropertyCheck {
        let results = check::run_checks(s.check.samples, s.seed)?;
        let t = check::check_table(&results);
        table.rows = t.rows;
        let all = results.iter().all(check::CheckResult::pass);
        (if all { RunStatus::Complete } else { RunStatus::ChecksFailed }, Vec::new())
    } else {
        let r = s.resolve()?;
        let threads = if opts.deterministic { 1 } else { opts.jobs };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
        let item = |h: f64| -> ItemOutput {
            match s.experiment {
                Experiment::Fidelity => experiments::fidelity_item(s, &r, h),
                Experiment::Return => experiments::return_item(s, &r, h),
                Experiment::Revival => experiments::revival_item(s, &r, h),
                Experiment::Convergence => experiments::convergence_item(s, &r, h),
                Experiment::Egorov => experiments::egorov_item(s, &r, h),
                Experiment::PropertyCheck => unreachable!("handled above"),
            }
        };
        // collect keeps the sweep order, so the table does not depend on scheduling
        let items: Vec<ItemOutput> = pool.install(|| r.hbars.par_iter().map(|&h| item(h)).collect());
        let errors = assemble(&mut table, items);
        if s.experiment == Experiment::Convergence {
            let h = table.column("hbar")?;
            let e = table.column("max_err")?;
            if let Some(slope) = log_log_slope(&h, &e) {
                table.push_meta("slope", table::num(slope));
            }
        }
        let status = if errors.is_empty() { RunStatus::Complete } else { RunStatus::Partial };
        (status, errors)
    };
    table.set_meta("status", status.as_str());
    for e in &errors {
        table.push_meta("error", e);
    }
    table.write(&table_path)?;

    let plot_path = if s.output.plot {
        let kind = match s.experiment {
            Experiment::Fidelity => Some(plot::PlotKind::Fidelity),
            Experiment::Revival => Some(plot::PlotKind::Rho),
            Experiment::Convergence => Some(plot::PlotKind::Convergence),
            _ => None,
        };
        match kind {
            Some(k) if !table.rows.is_empty() => {
                let p = out_dir.join(format!("{stem}.svg"));
                plot::plot(&table_path, k, &p)?;
                Some(p)
            }
            _ => None,
        }
    } else {
        None
    };

    let manifest = json!({
        "manifest_sha256": digest,
        "config": config,
        "status": status.as_str(),
        "errors": errors,
        "jobs": if opts.deterministic { 1 } else { opts.jobs },
        "deterministic": opts.deterministic,
        "outputs": {
            "table": table_path.file_name().map(|f| f.to_string_lossy().into_owned()),
            "plot": plot_path.as_ref().and_then(|p| p.file_name()).map(|f| f.to_string_lossy().into_owned()),
        },
        "rows": table.rows.len(),
    });
    let text = serde_json::to_string_pretty(&manifest).expect("json values serialize");
    std::fs::write(&manifest_path, text + "\n").map_err(|e| io_err(&manifest_path, e))?;

    Ok(RunOutcome {
        table: table_path,
        manifest: manifest_path,
        plot: plot_path,
        status,
        errors,
    })
}
