//! Curvature-adaptive integration of flow-matching probability-flow ODEs.
//!
//! The crate is organised around a single instrumented [`Field`] type that
//! wraps any [`VectorField`] and counts every evaluation. On top of it sit:
//!
//! - [`solvers`]: fixed-step Euler, Adams-Bashforth-2, adaptive Dormand-Prince
//!   5(4) and a high-accuracy reference integrator;
//! - [`probe`]: the one-shot lookahead linearity probe, the similarity-to-steps
//!   schedule and the state-reusing adaptive solver built from them;
//! - [`toy`]: a small MLP velocity field trained with the flow-matching
//!   regression loss on 2-D toy distributions;
//! - [`metrics`]: endpoint error, run aggregation and sample-set distances.
//!
//! All arithmetic is `f64`.

pub mod corpus;
mod error;
pub mod fields;
pub mod metrics;
pub mod probe;
pub mod solvers;
mod state;
pub mod toy;

pub use error::{Error, Result};
pub use fields::{exact_endpoint, Field, FieldSpec, VectorField};
pub use metrics::{aggregate, distribution_distance, endpoint_error, DistanceKind, RunAggregate};
pub use probe::{adaptive_solve, probe, schedule_steps, ProbeResult, ScheduleParams};
pub use solvers::{ab2_solve, euler_solve, reference_solve, rk45_solve, Rk45Config, SolveReport};
pub use state::{Condition, StateVector, Velocity};
