use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use flowprobe_core::probe::HorizonRow;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::matrix::{execute, load_fields, CellSummary, RunRecord};
use crate::sweep::{sweep_epsilon, sweep_horizon, EpsilonRow};
use crate::BenchError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub tool_version: String,
    /// Seconds since the Unix epoch at completion.
    pub timestamp: u64,
    pub config: ExperimentConfig,
    pub cells: Vec<CellSummary>,
    pub runs: Vec<RunRecord>,
    pub epsilon_sweep: Option<Vec<EpsilonRow>>,
    pub horizon_sweep: Option<Vec<HorizonRow>>,
}

impl ReportBundle {
    pub fn any_cell_failed(&self) -> bool {
        self.cells.iter().any(CellSummary::failed_entirely)
    }

    /// Copy with the timestamp and every wall-time quantity zeroed, for
    /// comparing runs that should be identical.
    pub fn normalized(&self) -> ReportBundle {
        let mut b = self.clone();
        b.timestamp = 0;
        for c in &mut b.cells {
            if let Some(a) = &mut c.aggregate {
                a.mean_wall_time_s = 0.0;
                a.p95_wall_time_s = 0.0;
            }
        }
        for r in &mut b.runs {
            r.solver_time_s = r.solver_time_s.map(|_| 0.0);
            r.setup_time_s = 0.0;
            r.oracle_time_s = 0.0;
        }
        for row in b.epsilon_sweep.iter_mut().flatten() {
            row.mean_solver_time_s = 0.0;
        }
        b
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        serde_json::from_str(text).map_err(|e| BenchError::Config(format!("bundle: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Run cells one at a time so wall times are not co-scheduled.
    pub serial_timing: bool,
    /// Also run the sweeps listed in the config's `[sweep]` section.
    pub with_sweeps: bool,
}

pub fn run_matrix(config: &ExperimentConfig, options: RunOptions) -> Result<ReportBundle, BenchError> {
    config.validate()?;
    let fields = load_fields(config)?;
    let matrix = execute(config, &fields, options.serial_timing)?;
    let sweep = config.sweep.clone().unwrap_or_default();
    let (mut epsilon_sweep, mut horizon_sweep) = (None, None);
    if options.with_sweeps {
        if !sweep.epsilons.is_empty() {
            epsilon_sweep = Some(sweep_epsilon(config, &fields, &sweep.epsilons)?);
        }
        if !sweep.horizons.is_empty() {
            horizon_sweep = Some(sweep_horizon(config, &fields, &sweep.horizons)?);
        }
    }
    Ok(ReportBundle {
        tool_version: TOOL_VERSION.to_string(),
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config: config.clone(),
        cells: matrix.cells,
        runs: matrix.runs,
        epsilon_sweep,
        horizon_sweep,
    })
}

pub const CSV_HEADER: [&str; 12] = [
    "run_id",
    "solver",
    "field",
    "steps",
    "nfe",
    "solver_time_s",
    "error",
    "success",
    "probe_similarity",
    "scheduled_N",
    "setup_time_s",
    "oracle_time_s",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn runs_csv(runs: &[RunRecord]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| BenchError::Config(format!("csv: {e}"));
    w.write_record(CSV_HEADER).map_err(fail)?;
    for r in runs {
        w.write_record([
            r.run_id.to_string(),
            r.solver.clone(),
            r.field.clone(),
            opt(r.steps),
            opt(r.nfe),
            opt(r.solver_time_s),
            opt(r.error),
            r.success.to_string(),
            opt(r.probe_similarity),
            opt(r.scheduled_n),
            r.setup_time_s.to_string(),
            r.oracle_time_s.to_string(),
        ])
        .map_err(fail)?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8"))
}

/// Plain two-column numeric text, one point per line.
pub fn plot_data(points: impl IntoIterator<Item = (f64, f64)>) -> String {
    points.into_iter().map(|(x, y)| format!("{x} {y}\n")).collect()
}

/// Plot files derived from the bundle, keyed by file name.
pub fn plot_files(bundle: &ReportBundle) -> Vec<(String, String)> {
    let mut out = Vec::new();
    if let Some(rows) = &bundle.epsilon_sweep {
        out.push(("epsilon_steps.dat".into(), plot_data(rows.iter().map(|r| (r.epsilon, r.mean_steps)))));
        out.push(("epsilon_error.dat".into(), plot_data(rows.iter().map(|r| (r.epsilon, r.mean_error)))));
        out.push(("epsilon_success.dat".into(), plot_data(rows.iter().map(|r| (r.epsilon, r.success_rate)))));
    }
    if let Some(rows) = &bundle.horizon_sweep {
        out.push(("horizon_failure.dat".into(), plot_data(rows.iter().map(|r| (r.dt_probe, r.failure_rate)))));
        out.push(("horizon_steps.dat".into(), plot_data(rows.iter().map(|r| (r.dt_probe, r.mean_steps)))));
        out.push(("horizon_error.dat".into(), plot_data(rows.iter().map(|r| (r.dt_probe, r.mean_error)))));
    }
    let scheduled: Vec<&RunRecord> = bundle.runs.iter().filter(|r| r.scheduled_n.is_some()).collect();
    if !scheduled.is_empty() {
        out.push((
            "schedule_vs_similarity.dat".into(),
            plot_data(scheduled.iter().filter_map(|r| Some((r.probe_similarity?, r.scheduled_n? as f64)))),
        ));
        out.push((
            "schedule_vs_curvature.dat".into(),
            plot_data(scheduled.iter().filter_map(|r| Some((r.curvature?, r.scheduled_n? as f64)))),
        ));
    }
    out
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf, BenchError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| BenchError::io(&path, e))?;
    Ok(path)
}

/// Writes `runs.csv` and/or `bundle.json` plus every plot file; returns the paths written.
pub fn emit_reports(bundle: &ReportBundle, dir: &Path, formats: &BTreeSet<Format>) -> Result<Vec<PathBuf>, BenchError> {
    fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let mut written = Vec::new();
    if formats.contains(&Format::Csv) {
        written.push(write(dir, "runs.csv", &runs_csv(&bundle.runs)?)?);
    }
    if formats.contains(&Format::Json) {
        written.push(write(dir, "bundle.json", &bundle.to_json())?);
    }
    for (name, body) in plot_files(bundle) {
        written.push(write(dir, &name, &body)?);
    }
    Ok(written)
}
