//! Lookahead linearity probe and the adaptive solver built on it.
//!
//! One Euler step of length `dt_probe` is extrapolated from `x0`, the field
//! is re-evaluated there, and the cosine similarity `S` between the two
//! velocities picks a step count
//!
//! ```text
//! N = clip(n_min + floor((1 - S) / epsilon) * delta_n, n_min, n_max)
//! ```
//!
//! When `N == n_min` the two probe evaluations already form the whole solve
//! (two Euler steps on the grid `{0, dt_probe}`), so the cost is 2 NFE.
//! Otherwise integration restarts from `x0` on a uniform `N`-step grid,
//! reusing the first probe evaluation, for `N + 1` NFE in total.

use serde::{Deserialize, Serialize};

use crate::fields::Field;
use crate::metrics::endpoint_error;
use crate::solvers::{check_finite, grid_time, Recorder, SolveReport};
use crate::state::{dot, Condition, StateVector, Velocity};
use crate::{Error, Result};

/// Velocity norms below this make the similarity undefined; `S` is then 0.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub epsilon: f64,
    pub dt_probe: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub delta_n: usize,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            epsilon: 0.008,
            dt_probe: 0.5,
            n_min: 2,
            n_max: 10,
            delta_n: 2,
        }
    }
}

impl ScheduleParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return fail("epsilon must be positive");
        }
        if !(self.dt_probe > 0.0 && self.dt_probe < 1.0) {
            return fail("dt_probe must lie in (0, 1)");
        }
        if self.n_min < 2 {
            return fail("n_min must be at least 2");
        }
        if self.n_min > self.n_max {
            return fail("n_min must not exceed n_max");
        }
        if self.delta_n == 0 {
            return fail("delta_n must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub v_start: Velocity,
    pub x_probe: StateVector,
    pub v_probe: Velocity,
    pub similarity: f64,
}

/// Cosine similarity with the degenerate-norm rule.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let aa = dot(a, a);
    let bb = dot(b, b);
    if aa.sqrt() < DEGENERATE_NORM || bb.sqrt() < DEGENERATE_NORM {
        return 0.0;
    }
    // sqrt(aa * bb) rather than |a| |b| keeps S == 1 exact for identical vectors
    (dot(a, b) / (aa * bb).sqrt()).clamp(-1.0, 1.0)
}

/// Two evaluations: at `(x0, 0)` and at `(x0 + dt_probe * v_start, dt_probe)`.
pub fn probe(field: &Field, x0: &StateVector, c: &Condition, params: &ScheduleParams) -> Result<ProbeResult> {
    if !x0.is_finite() {
        return Err(Error::NonFinite("initial state"));
    }
    let v_start = field.evaluate(x0, 0.0, c)?;
    if !v_start.is_finite() {
        return Err(Error::NonFinite("probe velocity"));
    }
    let x_probe = x0.advanced(&v_start, params.dt_probe);
    let v_probe = field.evaluate(&x_probe, params.dt_probe, c)?;
    if !v_probe.is_finite() {
        return Err(Error::NonFinite("probe velocity"));
    }
    let similarity = cosine_similarity(&v_start, &v_probe);
    Ok(ProbeResult {
        v_start,
        x_probe,
        v_probe,
        similarity,
    })
}

/// Maps a similarity to a step count.
pub fn schedule_steps(similarity: f64, params: &ScheduleParams) -> usize {
    let increments = ((1.0 - similarity) / params.epsilon).floor();
    let raw = params.n_min as f64 + increments * params.delta_n as f64;
    // clip in floating point; the raw count can be astronomically large for tiny epsilon
    raw.clamp(params.n_min as f64, params.n_max as f64) as usize
}

/// Probe, schedule, then either finish from the probe state or integrate densely from `x0`.
pub fn adaptive_solve(field: &Field, x0: &StateVector, c: &Condition, params: &ScheduleParams) -> Result<SolveReport> {
    params.validate()?;
    let mut rec = Recorder::start(field);
    let p = probe(field, x0, c, params)?;
    let n = schedule_steps(p.similarity, params);

    let endpoint = if n == params.n_min {
        rec.push(0.0, x0, Some(&p.v_start));
        rec.push(params.dt_probe, &p.x_probe, Some(&p.v_probe));
        let x1 = p.x_probe.advanced(&p.v_probe, 1.0 - params.dt_probe);
        check_finite(&x1, 2)?;
        x1
    } else {
        let h = 1.0 / n as f64;
        rec.push(0.0, x0, Some(&p.v_start));
        let mut x = x0.advanced(&p.v_start, h);
        check_finite(&x, 1)?;
        for i in 1..n {
            let t = grid_time(i, n);
            let v = field.evaluate(&x, t, c)?;
            rec.push(t, &x, Some(&v));
            x = x.advanced(&v, h);
            check_finite(&x, i + 1)?;
        }
        x
    };

    let mut report = rec.finish("adaptive", endpoint, n);
    report.probe_similarity = Some(p.similarity);
    report.scheduled_n = Some(n);
    Ok(report)
}

/// One integration problem with its ground-truth endpoint.
#[derive(Debug)]
pub struct Case {
    pub field: Field,
    pub x0: StateVector,
    pub condition: Condition,
    pub oracle: StateVector,
}

impl Case {
    /// Builds a case whose oracle comes from [`crate::reference_solve`] on a
    /// separate handle, leaving `field`'s counter untouched.
    pub fn with_reference(field: Field, x0: StateVector, condition: Condition) -> Result<Self> {
        let oracle = crate::solvers::reference_solve(&field.fork(), &x0, &condition)?;
        Ok(Self {
            field,
            x0,
            condition,
            oracle,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub dt_probe: f64,
    pub mean_steps: f64,
    pub mean_error: f64,
    pub failure_rate: f64,
}

/// Runs [`adaptive_solve`] over `cases` once per probe horizon.
///
/// A run fails when its endpoint error reaches `failure_threshold` or the
/// solve itself errors; errored runs are excluded from the means.
pub fn sweep_probe_horizon(
    cases: &[Case],
    dt_values: &[f64],
    template: &ScheduleParams,
    failure_threshold: f64,
) -> Result<Vec<HorizonRow>> {
    if cases.is_empty() || dt_values.is_empty() {
        return Err(Error::Contract("horizon sweep needs cases and dt values".into()));
    }
    dt_values
        .iter()
        .map(|&dt| {
            let params = ScheduleParams {
                dt_probe: dt,
                ..*template
            };
            params.validate()?;
            let mut steps = 0.0;
            let mut error = 0.0;
            let mut solved = 0usize;
            let mut failures = 0usize;
            for case in cases {
                match adaptive_solve(&case.field, &case.x0, &case.condition, &params) {
                    Ok(r) => {
                        let e = endpoint_error(&r.endpoint, &case.oracle);
                        steps += r.steps_taken as f64;
                        error += e;
                        solved += 1;
                        if e.is_nan() || e >= failure_threshold {
                            failures += 1;
                        }
                    }
                    Err(_) => failures += 1,
                }
            }
            let denom = solved.max(1) as f64;
            Ok(HorizonRow {
                dt_probe: dt,
                mean_steps: steps / denom,
                mean_error: if solved == 0 { f64::NAN } else { error / denom },
                failure_rate: failures as f64 / cases.len() as f64,
            })
        })
        .collect()
}
