use std::sync::Arc;
use std::time::Instant;

use flowprobe_core::corpus;
use flowprobe_core::metrics::{aggregate, endpoint_error, RunAggregate};
use flowprobe_core::toy::MlpField;
use flowprobe_core::{
    ab2_solve, adaptive_solve, euler_solve, exact_endpoint, reference_solve, rk45_solve, Condition, Field, FieldSpec,
    SolveReport, StateVector, VectorField,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, SolverMethod};
use crate::BenchError;

/// One loaded corpus member.
pub struct Member {
    pub spec: FieldSpec,
    pub field: Field,
    pub setup_time_s: f64,
}

impl Member {
    /// Turning or rotation rate, when the field has one.
    pub fn curvature(&self) -> Option<f64> {
        match self.spec {
            FieldSpec::Rotation { omega } | FieldSpec::PiecewiseCurvature { omega, .. } => Some(omega),
            _ => None,
        }
    }
}

/// A named corpus with one paired start per run.
pub struct LoadedField {
    pub name: String,
    pub members: Vec<Member>,
    pub starts: Vec<StateVector>,
}

impl LoadedField {
    pub fn member(&self, run: usize) -> &Member {
        &self.members[run % self.members.len()]
    }
}

fn load_member(spec: FieldSpec) -> Result<Member, flowprobe_core::Error> {
    let started = Instant::now();
    let field = Field::from_spec(&spec)?;
    Ok(Member {
        spec,
        field,
        setup_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Builds every corpus and draws starts. Start draws depend only on the
/// experiment seed and the field's position in the config.
pub fn load_fields(config: &ExperimentConfig) -> Result<Vec<LoadedField>, BenchError> {
    config
        .fields
        .iter()
        .enumerate()
        .map(|(index, entry)| {
            let named = |e: flowprobe_core::Error| BenchError::Config(format!("field '{}': {e}", entry.name));
            let specs = if let Some(spec) = &entry.spec {
                vec![spec.clone()]
            } else if let Some(preset) = entry.preset {
                let count = entry.count.unwrap_or(config.runs);
                corpus::generate(preset, count, entry.seed.unwrap_or(config.seed))
            } else {
                let path = entry.weights.clone().expect("validated: one source set");
                vec![FieldSpec::Learned { weights: path }]
            };
            let members = specs
                .into_iter()
                .map(load_member)
                .collect::<Result<Vec<_>, _>>()
                .map_err(named)?;
            let dim = members[0].field.dim();
            let stream = config.seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            Ok(LoadedField {
                name: entry.name.clone(),
                starts: corpus::initial_states(dim, config.runs, stream),
                members,
            })
        })
        .collect()
}

/// Wraps an already-trained network as a corpus member.
pub fn learned_member(net: MlpField, weights: std::path::PathBuf) -> Member {
    Member {
        spec: FieldSpec::Learned { weights },
        field: Field::from_arc(Arc::new(net) as Arc<dyn VectorField>),
        setup_time_s: 0.0,
    }
}

pub fn hash_state(x: &StateVector) -> String {
    let mut h = Sha256::new();
    for v in x.iter() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Ground-truth endpoint: closed form where one exists, else the reference integrator.
pub fn oracle(member: &Member, x0: &StateVector) -> Result<StateVector, flowprobe_core::Error> {
    match exact_endpoint(&member.spec, x0) {
        Err(flowprobe_core::Error::UnsupportedOracle(_)) => {
            reference_solve(&member.field.fork(), x0, &Condition::empty())
        }
        other => other,
    }
}

pub fn solve(method: &SolverMethod, field: &Field, x0: &StateVector) -> flowprobe_core::Result<SolveReport> {
    let c = Condition::empty();
    match method {
        SolverMethod::Euler { steps } => euler_solve(field, x0, &c, *steps),
        SolverMethod::Ab2 { steps } => ab2_solve(field, x0, &c, *steps),
        SolverMethod::Rk45 { .. } => rk45_solve(field, x0, &c, &method.rk45_config().unwrap()),
        SolverMethod::Adaptive { .. } => adaptive_solve(field, x0, &c, &method.schedule_params().unwrap()),
    }
}

/// Runs `repeats` identical solves on fresh counters and keeps the median wall time.
fn timed_solve(method: &SolverMethod, member: &Member, x0: &StateVector, repeats: usize) -> flowprobe_core::Result<SolveReport> {
    let mut times = Vec::with_capacity(repeats);
    let mut first = None;
    for _ in 0..repeats {
        let r = solve(method, &member.field.fork(), x0)?;
        times.push(r.wall_time_s);
        first.get_or_insert(r);
    }
    times.sort_by(f64::total_cmp);
    let mut report = first.expect("repeats >= 1");
    report.wall_time_s = times[times.len() / 2];
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub field: String,
    pub solver: String,
    pub run_id: usize,
    /// Index of the corpus member this run integrated.
    pub member: usize,
    pub x0_sha256: String,
    pub curvature: Option<f64>,
    pub steps: Option<usize>,
    pub nfe: Option<u64>,
    pub solver_time_s: Option<f64>,
    pub setup_time_s: f64,
    pub oracle_time_s: f64,
    pub error: Option<f64>,
    pub success: bool,
    pub probe_similarity: Option<f64>,
    pub scheduled_n: Option<usize>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub field: String,
    pub solver: String,
    pub runs: usize,
    pub failed_runs: usize,
    /// Aggregate over the runs that completed; `None` when none did.
    pub aggregate: Option<RunAggregate>,
}

impl CellSummary {
    pub fn failed_entirely(&self) -> bool {
        self.failed_runs == self.runs
    }
}

pub struct MatrixResult {
    pub cells: Vec<CellSummary>,
    pub runs: Vec<RunRecord>,
}

struct Outcome {
    record: RunRecord,
    solved: Option<(SolveReport, StateVector)>,
}

fn run_one(
    field: &LoadedField,
    label: &str,
    method: &SolverMethod,
    run_id: usize,
    config: &ExperimentConfig,
) -> Outcome {
    let member = field.member(run_id);
    let x0 = &field.starts[run_id];
    let mut record = RunRecord {
        field: field.name.clone(),
        solver: label.to_string(),
        run_id,
        member: run_id % field.members.len(),
        x0_sha256: hash_state(x0),
        curvature: member.curvature(),
        steps: None,
        nfe: None,
        solver_time_s: None,
        setup_time_s: member.setup_time_s,
        oracle_time_s: 0.0,
        error: None,
        success: false,
        probe_similarity: None,
        scheduled_n: None,
        failure: None,
    };
    let started = Instant::now();
    let truth = oracle(member, x0);
    record.oracle_time_s = started.elapsed().as_secs_f64();
    let result = truth.and_then(|t| timed_solve(method, member, x0, config.timing_repeats).map(|r| (r, t)));
    match result {
        Ok((report, truth)) => {
            let e = endpoint_error(&report.endpoint, &truth);
            record.steps = Some(report.steps_taken);
            record.nfe = Some(report.nfe);
            record.solver_time_s = Some(report.wall_time_s);
            record.error = Some(e);
            record.success = e < config.success_threshold;
            record.probe_similarity = report.probe_similarity;
            record.scheduled_n = report.scheduled_n;
            Outcome {
                record,
                solved: Some((report, truth)),
            }
        }
        Err(e) => {
            record.failure = Some(e.to_string());
            Outcome { record, solved: None }
        }
    }
}

/// Every (field, solver, run) triple. Runs in parallel unless `serial` is set;
/// the result is sorted by (field, solver, run_id) either way.
pub fn execute(config: &ExperimentConfig, fields: &[LoadedField], serial: bool) -> Result<MatrixResult, BenchError> {
    let tasks: Vec<(usize, usize, usize)> = (0..fields.len())
        .flat_map(|f| (0..config.solvers.len()).flat_map(move |s| (0..config.runs).map(move |r| (f, s, r))))
        .collect();
    let labels: Vec<String> = config.solvers.iter().map(|s| s.label()).collect();
    let work = |&(f, s, r): &(usize, usize, usize)| run_one(&fields[f], &labels[s], &config.solvers[s].method, r, config);
    let mut outcomes: Vec<Outcome> = if serial {
        tasks.iter().map(work).collect()
    } else {
        tasks.par_iter().map(work).collect()
    };
    outcomes.sort_by(|a, b| {
        let (a, b) = (&a.record, &b.record);
        (&a.field, &a.solver, a.run_id).cmp(&(&b.field, &b.solver, b.run_id))
    });

    let mut cells = Vec::new();
    for chunk in outcomes.chunk_by(|a, b| a.record.field == b.record.field && a.record.solver == b.record.solver) {
        let (reports, truths): (Vec<SolveReport>, Vec<StateVector>) =
            chunk.iter().filter_map(|o| o.solved.clone()).unzip();
        let aggregate = if reports.is_empty() {
            None
        } else {
            Some(aggregate(&reports, &truths, config.success_threshold)?)
        };
        cells.push(CellSummary {
            field: chunk[0].record.field.clone(),
            solver: chunk[0].record.solver.clone(),
            runs: chunk.len(),
            failed_runs: chunk.len() - reports.len(),
            aggregate,
        });
    }
    Ok(MatrixResult {
        cells,
        runs: outcomes.into_iter().map(|o| o.record).collect(),
    })
}
