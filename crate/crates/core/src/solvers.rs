//! Baseline integrators for `dx/dt = v(x, t, c)` on `t in [0, 1]`.
//!
//! Every solver reports `nfe` as the counter delta of the [`Field`] it was
//! handed, so concurrent solves should run on separate [`Field::fork`]s.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::fields::Field;
use crate::state::{distance, Condition, StateVector, Velocity};
use crate::{Error, Result};

/// One entry of a solve trajectory: the state at `t` and the velocity used
/// to leave it. The final entry sits at `t = 1` and carries no velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub x: StateVector,
    pub v: Option<Velocity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub solver: String,
    pub endpoint: StateVector,
    pub steps_taken: usize,
    pub nfe: u64,
    pub step_record: Vec<StepRecord>,
    pub wall_time_s: f64,
    /// Only set by the adaptive probe solver.
    pub probe_similarity: Option<f64>,
    /// Only set by the adaptive probe solver.
    pub scheduled_n: Option<usize>,
}

/// Shared bookkeeping for a single solve.
pub(crate) struct Recorder<'a> {
    field: &'a Field,
    nfe_start: u64,
    started: Instant,
    pub(crate) steps: Vec<StepRecord>,
}

impl<'a> Recorder<'a> {
    pub(crate) fn start(field: &'a Field) -> Self {
        Self {
            field,
            nfe_start: field.nfe_count(),
            started: Instant::now(),
            steps: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, t: f64, x: &StateVector, v: Option<&Velocity>) {
        self.steps.push(StepRecord {
            t,
            x: x.clone(),
            v: v.cloned(),
        });
    }

    pub(crate) fn finish(mut self, solver: &str, endpoint: StateVector, steps_taken: usize) -> SolveReport {
        self.push(1.0, &endpoint, None);
        SolveReport {
            solver: solver.to_string(),
            endpoint,
            steps_taken,
            nfe: self.field.nfe_count() - self.nfe_start,
            step_record: self.steps,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            probe_similarity: None,
            scheduled_n: None,
        }
    }
}

pub(crate) fn check_finite(x: &StateVector, step: usize) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericalBlowup { step })
    }
}

/// Grid time `i / n`, shared by every uniform-grid solver so that grids agree bitwise.
pub(crate) fn grid_time(i: usize, n: usize) -> f64 {
    i as f64 / n as f64
}

/// Forward Euler with `n` uniform steps.
pub fn euler_solve(field: &Field, x0: &StateVector, c: &Condition, n: usize) -> Result<SolveReport> {
    if n == 0 {
        return Err(Error::InvalidParams("euler needs at least one step".into()));
    }
    let mut rec = Recorder::start(field);
    let h = 1.0 / n as f64;
    let mut x = x0.clone();
    for i in 0..n {
        let t = grid_time(i, n);
        let v = field.evaluate(&x, t, c)?;
        rec.push(t, &x, Some(&v));
        x = x.advanced(&v, h);
        check_finite(&x, i + 1)?;
    }
    Ok(rec.finish("euler", x, n))
}

/// Two-step Adams-Bashforth, bootstrapped with one Euler step.
pub fn ab2_solve(field: &Field, x0: &StateVector, c: &Condition, n: usize) -> Result<SolveReport> {
    if n < 2 {
        return Err(Error::InvalidParams("ab2 needs at least two steps".into()));
    }
    let mut rec = Recorder::start(field);
    let h = 1.0 / n as f64;
    let mut x = x0.clone();

    let mut v_prev = field.evaluate(&x, 0.0, c)?;
    rec.push(0.0, &x, Some(&v_prev));
    x = x.advanced(&v_prev, h);
    check_finite(&x, 1)?;

    for i in 1..n {
        let t = grid_time(i, n);
        let v = field.evaluate(&x, t, c)?;
        rec.push(t, &x, Some(&v));
        let blended: Vec<f64> = v
            .iter()
            .zip(v_prev.iter())
            .map(|(a, b)| 1.5 * a - 0.5 * b)
            .collect();
        x = x.advanced(&blended, h);
        check_finite(&x, i + 1)?;
        v_prev = v;
    }
    Ok(rec.finish("ab2", x, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rk45Config {
    pub atol: f64,
    pub rtol: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
}

impl Default for Rk45Config {
    fn default() -> Self {
        Self {
            atol: 1e-6,
            rtol: 1e-6,
            initial_step: 0.25,
            min_step: 1e-12,
            max_step: 1.0,
        }
    }
}

impl Rk45Config {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            atol: tol,
            rtol: tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.atol, self.rtol, self.min_step]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !positive {
            return Err(Error::InvalidParams(
                "rk45 tolerances and minimum step must be positive".into(),
            ));
        }
        if !(self.min_step <= self.initial_step && self.initial_step <= self.max_step) {
            return Err(Error::InvalidParams(
                "rk45 steps must satisfy min <= initial <= max".into(),
            ));
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [&[f64]; 7] = [
    &[],
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
    &[
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights (identical to the last stage row, hence FSAL).
const DP_B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

fn combine(x: &StateVector, ks: &[Velocity], weights: &[f64], h: f64) -> StateVector {
    let mut out = x.clone();
    for (k, w) in ks.iter().zip(weights) {
        if *w == 0.0 {
            continue;
        }
        for (o, kv) in out.as_mut_slice().iter_mut().zip(k.iter()) {
            *o += h * w * kv;
        }
    }
    out
}

/// Adaptive Dormand-Prince 5(4).
///
/// A step is accepted when `||x5 - x4|| <= atol + rtol * max(||x||, ||x_new||)`.
/// The last stage of an accepted step is reused as the first stage of the
/// next one, so the first attempt costs 7 evaluations and every later attempt
/// (accepted or rejected) costs 6. Rejected attempts are counted in `nfe`.
pub fn rk45_solve(field: &Field, x0: &StateVector, c: &Condition, cfg: &Rk45Config) -> Result<SolveReport> {
    cfg.validate()?;
    let mut rec = Recorder::start(field);
    let mut t = 0.0f64;
    let mut x = x0.clone();
    let mut h = cfg.initial_step;
    let mut k_first = field.evaluate(&x, t, c)?;
    let mut accepted = 0usize;

    while t < 1.0 {
        if h < cfg.min_step {
            return Err(Error::StepUnderflow { t, step: h });
        }
        let last = t + h >= 1.0;
        let h_step = if last { 1.0 - t } else { h };
        let t_next = if last { 1.0 } else { t + h_step };

        let mut ks: Vec<Velocity> = Vec::with_capacity(7);
        ks.push(k_first.clone());
        for stage in 1..7 {
            let xs = combine(&x, &ks, DP_A[stage], h_step);
            check_finite(&xs, accepted + 1)?;
            let ts = if stage >= 5 { t_next } else { (t + DP_C[stage] * h_step).min(1.0) };
            ks.push(field.evaluate(&xs, ts, c)?);
        }
        let x5 = combine(&x, &ks, &DP_B5, h_step);
        let x4 = combine(&x, &ks, &DP_B4, h_step);

        let scale = cfg.atol + cfg.rtol * x.norm().max(x5.norm());
        let err = distance(&x5, &x4) / scale;
        if !err.is_finite() {
            return Err(Error::NumericalBlowup { step: accepted + 1 });
        }

        let factor = if err == 0.0 {
            MAX_FACTOR
        } else {
            (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
        };

        if err <= 1.0 {
            rec.push(t, &x, Some(&ks[0]));
            accepted += 1;
            x = x5;
            t = t_next;
            k_first = ks.pop().expect("seven stages");
            h = (h_step * factor).min(cfg.max_step);
        } else {
            h = h_step * factor.min(1.0);
        }
    }
    Ok(rec.finish("rk45", x, accepted))
}

/// Tolerance used by [`reference_solve`].
pub const REFERENCE_TOLERANCE: f64 = 1e-10;

/// High-accuracy endpoint: Dormand-Prince at `atol = rtol = 1e-10`,
/// initial step `1e-3`, minimum step `1e-14`.
pub fn reference_solve(field: &Field, x0: &StateVector, c: &Condition) -> Result<StateVector> {
    let cfg = Rk45Config {
        atol: REFERENCE_TOLERANCE,
        rtol: REFERENCE_TOLERANCE,
        initial_step: 1e-3,
        min_step: 1e-14,
        max_step: 1.0,
    };
    Ok(rk45_solve(field, x0, c, &cfg)?.endpoint)
}
