use flowprobe_core::metrics::endpoint_error;
use flowprobe_core::probe::{sweep_probe_horizon, Case, HorizonRow};
use flowprobe_core::{adaptive_solve, Condition, ScheduleParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{check_epsilons, check_horizons, ExperimentConfig};
use crate::matrix::{oracle, LoadedField};
use crate::BenchError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    pub mean_steps: f64,
    pub mean_solver_time_s: f64,
    pub mean_error: f64,
    pub success_rate: f64,
    /// Runs that errored; they count as unsuccessful and are left out of the means.
    pub failed_runs: usize,
}

fn cases(config: &ExperimentConfig, fields: &[LoadedField]) -> Result<Vec<Case>, BenchError> {
    let pairs: Vec<(usize, usize)> = (0..fields.len())
        .flat_map(|f| (0..config.runs).map(move |r| (f, r)))
        .collect();
    pairs
        .par_iter()
        .map(|&(f, r)| {
            let member = fields[f].member(r);
            let x0 = fields[f].starts[r].clone();
            let truth = oracle(member, &x0)?;
            Ok(Case {
                field: member.field.fork(),
                x0,
                condition: Condition::empty(),
                oracle: truth,
            })
        })
        .collect::<Result<Vec<_>, flowprobe_core::Error>>()
        .map_err(BenchError::from)
}

/// Adaptive solver over the whole configured corpus, once per epsilon; the
/// remaining probe parameters come from the config's first adaptive solver.
pub fn sweep_epsilon(config: &ExperimentConfig, fields: &[LoadedField], epsilons: &[f64]) -> Result<Vec<EpsilonRow>, BenchError> {
    check_epsilons(epsilons)?;
    let cases = cases(config, fields)?;
    let template = config.adaptive_template();
    epsilons
        .iter()
        .map(|&epsilon| {
            let params = ScheduleParams { epsilon, ..template };
            let results: Vec<Option<(f64, f64, f64)>> = cases
                .par_iter()
                .map(|case| {
                    adaptive_solve(&case.field.fork(), &case.x0, &case.condition, &params)
                        .ok()
                        .map(|r| (r.steps_taken as f64, r.wall_time_s, endpoint_error(&r.endpoint, &case.oracle)))
                })
                .collect();
            let ok: Vec<(f64, f64, f64)> = results.iter().flatten().copied().collect();
            let denom = ok.len().max(1) as f64;
            let mean = |pick: fn(&(f64, f64, f64)) -> f64| ok.iter().map(pick).sum::<f64>() / denom;
            let successes = ok.iter().filter(|r| r.2 < config.success_threshold).count();
            Ok(EpsilonRow {
                epsilon,
                mean_steps: mean(|r| r.0),
                mean_solver_time_s: mean(|r| r.1),
                mean_error: mean(|r| r.2),
                success_rate: successes as f64 / cases.len() as f64,
                failed_runs: cases.len() - ok.len(),
            })
        })
        .collect()
}

pub fn sweep_horizon(config: &ExperimentConfig, fields: &[LoadedField], horizons: &[f64]) -> Result<Vec<HorizonRow>, BenchError> {
    check_horizons(horizons)?;
    let cases = cases(config, fields)?;
    Ok(sweep_probe_horizon(&cases, horizons, &config.adaptive_template(), config.success_threshold)?)
}
