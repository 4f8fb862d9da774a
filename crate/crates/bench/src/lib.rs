//! Benchmark harness for the probe-scheduled solver: experiment configs,
//! solver-by-field run matrices, epsilon and probe-horizon sweeps, and
//! CSV/JSON/plot-data reports.

pub mod config;
pub mod matrix;
pub mod report;
pub mod sweep;

use std::path::{Path, PathBuf};

pub use config::{ExperimentConfig, FieldEntry, SolverEntry, SolverMethod, SweepSection};
pub use matrix::{CellSummary, RunRecord};
pub use report::{emit_reports, run_matrix, Format, ReportBundle, RunOptions};
pub use sweep::{sweep_epsilon, sweep_horizon, EpsilonRow};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] flowprobe_core::Error),
}

impl BenchError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        BenchError::Io {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    /// Process exit status for this error: 1 for bad input, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 1,
            BenchError::Core(flowprobe_core::Error::Parse { .. } | flowprobe_core::Error::Schema(_)) => 1,
            _ => 2,
        }
    }
}
