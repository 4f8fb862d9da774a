//! Vector-field abstraction, analytic fields with closed-form flows, and the
//! evaluation-counting wrapper every solver goes through.
//!
//! # Counter contract
//!
//! [`Field`] holds an atomic counter, so one instance may be shared across
//! threads and the total stays exact. A *per-solve* counter delta is only
//! meaningful when no other thread evaluates the same instance during that
//! solve; concurrent runs should each take their own instance via
//! [`Field::fork`], which shares the underlying field but starts a fresh
//! counter.

use std::fmt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::state::{Condition, StateVector, Velocity};
use crate::toy::MlpField;
use crate::{Error, Result};

/// A velocity field `v(x, t, c)` of fixed state dimension.
///
/// Implementations may assume inputs were validated by [`Field::evaluate`]:
/// `x.len() == self.dim()`, `x` finite and `t` in `[0, 1]`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    /// Required conditioning length, or `None` when the field ignores `c`.
    fn condition_dim(&self) -> Option<usize> {
        None
    }

    fn velocity(&self, x: &[f64], t: f64, c: &Condition) -> Vec<f64>;
}

/// Instrumented handle: validates inputs and counts evaluations.
pub struct Field {
    inner: Arc<dyn VectorField>,
    nfe: AtomicU64,
}

impl Field {
    pub fn new<F: VectorField + 'static>(field: F) -> Self {
        Self::from_arc(Arc::new(field))
    }

    pub fn from_arc(inner: Arc<dyn VectorField>) -> Self {
        Self {
            inner,
            nfe: AtomicU64::new(0),
        }
    }

    /// Builds the field described by `spec`. Learned specs read their weight file.
    pub fn from_spec(spec: &FieldSpec) -> Result<Self> {
        spec.validate()?;
        Ok(match spec {
            FieldSpec::Constant { velocity } => Self::new(ConstantField {
                velocity: velocity.clone(),
            }),
            FieldSpec::Affine { rate, offset } => Self::new(AffineField {
                rate: *rate,
                offset: offset.clone(),
            }),
            FieldSpec::Rotation { omega } => Self::new(RotationField { omega: *omega }),
            FieldSpec::PiecewiseCurvature {
                velocity,
                omega,
                breakpoints,
            } => Self::new(PiecewiseCurvatureField {
                velocity: [velocity[0], velocity[1]],
                omega: *omega,
                breakpoints: breakpoints.clone(),
            }),
            FieldSpec::Learned { weights } => {
                let bytes = std::fs::read(weights).map_err(|e| Error::Io {
                    path: weights.display().to_string(),
                    message: e.to_string(),
                })?;
                Self::new(MlpField::load_weights(&bytes)?)
            }
        })
    }

    /// A new handle on the same underlying field with its own zeroed counter.
    pub fn fork(&self) -> Field {
        Self::from_arc(Arc::clone(&self.inner))
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn evaluate(&self, x: &StateVector, t: f64, c: &Condition) -> Result<Velocity> {
        let dim = self.inner.dim();
        if x.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: x.dim(),
            });
        }
        if let Some(k) = self.inner.condition_dim() {
            if c.dim() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: c.dim(),
                });
            }
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("state"));
        }
        if !c.is_finite() {
            return Err(Error::NonFinite("condition"));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::TimeOutOfRange(t));
        }
        self.nfe.fetch_add(1, Ordering::Relaxed);
        Ok(Velocity::new(self.inner.velocity(x, t, c)))
    }

    pub fn nfe_count(&self) -> u64 {
        self.nfe.load(Ordering::Relaxed)
    }

    pub fn reset_nfe(&self) {
        self.nfe.store(0, Ordering::Relaxed);
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("dim", &self.dim())
            .field("nfe", &self.nfe_count())
            .finish()
    }
}

/// Serializable description of a field.
///
/// Piecewise-curvature fields alternate straight and turning phases: the
/// heading of `velocity` is held fixed on `[0, b1)`, turns at angular rate
/// `omega` on `[b1, b2)`, is held again on `[b2, b3)`, and so on up to `t = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldSpec {
    Constant {
        velocity: Vec<f64>,
    },
    /// `v(x) = rate * x + offset`
    Affine {
        rate: f64,
        offset: Vec<f64>,
    },
    /// Planar `v(x) = omega * J x`, `J` the 90 degree rotation generator.
    Rotation {
        omega: f64,
    },
    PiecewiseCurvature {
        velocity: Vec<f64>,
        omega: f64,
        breakpoints: Vec<f64>,
    },
    Learned {
        weights: PathBuf,
    },
}

impl FieldSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            FieldSpec::Constant { .. } => "constant",
            FieldSpec::Affine { .. } => "affine",
            FieldSpec::Rotation { .. } => "rotation",
            FieldSpec::PiecewiseCurvature { .. } => "piecewise-curvature",
            FieldSpec::Learned { .. } => "learned",
        }
    }

    /// State dimension, or `None` for learned fields (declared in the weight file).
    pub fn dimension(&self) -> Option<usize> {
        match self {
            FieldSpec::Constant { velocity } => Some(velocity.len()),
            FieldSpec::Affine { offset, .. } => Some(offset.len()),
            FieldSpec::Rotation { .. } | FieldSpec::PiecewiseCurvature { .. } => Some(2),
            FieldSpec::Learned { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |vals: &[f64], what: &str| {
            if vals.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!("{what} must be finite")))
            }
        };
        match self {
            FieldSpec::Constant { velocity } => {
                non_empty(velocity, "velocity")?;
                finite(velocity, "velocity")
            }
            FieldSpec::Affine { rate, offset } => {
                non_empty(offset, "offset")?;
                finite(offset, "offset")?;
                finite(&[*rate], "rate")
            }
            FieldSpec::Rotation { omega } => finite(&[*omega], "omega"),
            FieldSpec::PiecewiseCurvature {
                velocity,
                omega,
                breakpoints,
            } => {
                if velocity.len() != 2 {
                    return Err(Error::InvalidParams(format!(
                        "piecewise-curvature velocity must be 2-D, got {}",
                        velocity.len()
                    )));
                }
                finite(velocity, "velocity")?;
                finite(&[*omega], "omega")?;
                if breakpoints.is_empty() {
                    return Err(Error::InvalidParams(
                        "piecewise-curvature needs at least one breakpoint".into(),
                    ));
                }
                if breakpoints.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
                    return Err(Error::InvalidParams(
                        "breakpoints must lie strictly inside (0, 1)".into(),
                    ));
                }
                if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidParams(
                        "breakpoints must be strictly ascending".into(),
                    ));
                }
                Ok(())
            }
            FieldSpec::Learned { .. } => Ok(()),
        }
    }
}

fn non_empty(v: &[f64], what: &str) -> Result<()> {
    if v.is_empty() {
        Err(Error::InvalidParams(format!("{what} must have dimension >= 1")))
    } else {
        Ok(())
    }
}

/// Closed-form `x(1)` of `dx/dt = v(x, t)` from `x(0) = x0`.
pub fn exact_endpoint(spec: &FieldSpec, x0: &StateVector) -> Result<StateVector> {
    spec.validate()?;
    if let Some(d) = spec.dimension() {
        if d != x0.dim() {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x0.dim(),
            });
        }
    }
    let out = match spec {
        FieldSpec::Constant { velocity } => x0.advanced(velocity, 1.0),
        FieldSpec::Affine { rate, offset } => {
            let growth = rate.exp();
            // (e^r - 1) / r, with its r -> 0 limit
            let gain = if *rate == 0.0 { 1.0 } else { rate.exp_m1() / rate };
            x0.iter()
                .zip(offset)
                .map(|(x, b)| growth * x + gain * b)
                .collect::<Vec<_>>()
                .into()
        }
        FieldSpec::Rotation { omega } => rotate([x0[0], x0[1]], *omega).to_vec().into(),
        FieldSpec::PiecewiseCurvature {
            velocity,
            omega,
            breakpoints,
        } => {
            let c = [velocity[0], velocity[1]];
            let mut x = [x0[0], x0[1]];
            let mut heading = 0.0;
            for (start, end, turning) in segments(breakpoints) {
                let len = end - start;
                if turning && *omega != 0.0 {
                    // integral of R(heading + omega s) c over [0, len] = -J (R(end) - R(start)) c / omega
                    let a = rotate(c, heading);
                    let b = rotate(c, heading + omega * len);
                    let diff = [b[0] - a[0], b[1] - a[1]];
                    x[0] += diff[1] / omega;
                    x[1] -= diff[0] / omega;
                    heading += omega * len;
                } else {
                    let v = rotate(c, heading);
                    x[0] += v[0] * len;
                    x[1] += v[1] * len;
                }
            }
            x.to_vec().into()
        }
        FieldSpec::Learned { .. } => return Err(Error::UnsupportedOracle("learned")),
    };
    Ok(out)
}

fn rotate(v: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// `(start, end, turning)` for each phase of a piecewise-curvature field.
fn segments(breakpoints: &[f64]) -> impl Iterator<Item = (f64, f64, bool)> + '_ {
    let starts = std::iter::once(0.0).chain(breakpoints.iter().copied());
    let ends = breakpoints.iter().copied().chain(std::iter::once(1.0));
    starts
        .zip(ends)
        .enumerate()
        .map(|(i, (a, b))| (a, b, i % 2 == 1))
}

#[derive(Debug, Clone)]
pub struct ConstantField {
    pub velocity: Vec<f64>,
}

impl VectorField for ConstantField {
    fn dim(&self) -> usize {
        self.velocity.len()
    }

    fn velocity(&self, _x: &[f64], _t: f64, _c: &Condition) -> Vec<f64> {
        self.velocity.clone()
    }
}

#[derive(Debug, Clone)]
pub struct AffineField {
    pub rate: f64,
    pub offset: Vec<f64>,
}

impl VectorField for AffineField {
    fn dim(&self) -> usize {
        self.offset.len()
    }

    fn velocity(&self, x: &[f64], _t: f64, _c: &Condition) -> Vec<f64> {
        x.iter()
            .zip(&self.offset)
            .map(|(x, b)| self.rate * x + b)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RotationField {
    pub omega: f64,
}

impl VectorField for RotationField {
    fn dim(&self) -> usize {
        2
    }

    fn velocity(&self, x: &[f64], _t: f64, _c: &Condition) -> Vec<f64> {
        vec![-self.omega * x[1], self.omega * x[0]]
    }
}

#[derive(Debug, Clone)]
pub struct PiecewiseCurvatureField {
    pub velocity: [f64; 2],
    pub omega: f64,
    pub breakpoints: Vec<f64>,
}

impl PiecewiseCurvatureField {
    /// Accumulated turning angle at time `t`.
    pub fn heading(&self, t: f64) -> f64 {
        let mut angle = 0.0;
        for (start, end, turning) in segments(&self.breakpoints) {
            if turning {
                angle += self.omega * (t.min(end) - start).max(0.0);
            }
            if t < end {
                break;
            }
        }
        angle
    }
}

impl VectorField for PiecewiseCurvatureField {
    fn dim(&self) -> usize {
        2
    }

    fn velocity(&self, _x: &[f64], t: f64, _c: &Condition) -> Vec<f64> {
        rotate(self.velocity, self.heading(t)).to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn field(spec: FieldSpec) -> Field {
        Field::from_spec(&spec).unwrap()
    }

    fn euler_reference(spec: &FieldSpec, x0: &StateVector, n: usize) -> StateVector {
        // direct forward Euler, bypassing the solver module
        let f = field(spec.clone());
        let c = Condition::empty();
        let h = 1.0 / n as f64;
        let mut x = x0.clone();
        for i in 0..n {
            let v = f.evaluate(&x, i as f64 * h, &c).unwrap();
            x = x.advanced(&v, h);
        }
        x
    }

    #[test]
    fn constant_field_ignores_state_and_time() {
        let f = field(FieldSpec::Constant {
            velocity: vec![1.0, 0.0],
        });
        let c = Condition::empty();
        let a = f.evaluate(&[3.0, -7.0].into(), 0.0, &c).unwrap();
        let b = f.evaluate(&[0.0, 0.0].into(), 0.73, &c).unwrap();
        assert_eq!(a.as_slice(), &[1.0, 0.0]);
        assert_eq!(a, b);
    }

    #[test]
    fn rotation_velocity_is_omega_j_x() {
        let f = field(FieldSpec::Rotation { omega: 1.0 });
        let v = f.evaluate(&[1.0, 0.0].into(), 0.0, &Condition::empty()).unwrap();
        assert_eq!(v.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn identity_affine_field() {
        let f = field(FieldSpec::Affine {
            rate: 1.0,
            offset: vec![0.0],
        });
        let v = f.evaluate(&[2.0].into(), 0.5, &Condition::empty()).unwrap();
        assert_eq!(v.as_slice(), &[2.0]);
    }

    #[test]
    fn evaluate_rejects_bad_input() {
        let f = field(FieldSpec::Rotation { omega: 1.0 });
        let c = Condition::empty();
        assert_eq!(
            f.evaluate(&[1.0].into(), 0.0, &c),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        );
        assert_eq!(
            f.evaluate(&[f64::NAN, 0.0].into(), 0.0, &c),
            Err(Error::NonFinite("state"))
        );
        assert_eq!(
            f.evaluate(&[1.0, 0.0].into(), 1.5, &c),
            Err(Error::TimeOutOfRange(1.5))
        );
        // rejected calls are not counted
        assert_eq!(f.nfe_count(), 0);
    }

    #[test]
    fn nfe_counter_counts_and_resets() {
        let f = field(FieldSpec::Constant { velocity: vec![1.0] });
        assert_eq!(f.nfe_count(), 0);
        for _ in 0..3 {
            f.evaluate(&[0.0].into(), 0.0, &Condition::empty()).unwrap();
        }
        assert_eq!(f.nfe_count(), 3);
        f.reset_nfe();
        assert_eq!(f.nfe_count(), 0);
    }

    #[test]
    fn shared_counter_is_exact_across_threads() {
        let f = field(FieldSpec::Rotation { omega: 1.0 });
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    for i in 0..1000 {
                        f.evaluate(&[1.0, 0.5].into(), i as f64 / 1000.0, &Condition::empty())
                            .unwrap();
                    }
                });
            }
        });
        assert_eq!(f.nfe_count(), 8000);
    }

    #[test]
    fn fork_starts_fresh_counter() {
        let f = field(FieldSpec::Rotation { omega: 1.0 });
        f.evaluate(&[1.0, 0.0].into(), 0.0, &Condition::empty()).unwrap();
        let g = f.fork();
        assert_eq!(g.nfe_count(), 0);
        g.evaluate(&[1.0, 0.0].into(), 0.0, &Condition::empty()).unwrap();
        assert_eq!(f.nfe_count(), 1);
        assert_eq!(g.nfe_count(), 1);
    }

    #[test]
    fn exact_endpoints_of_simple_fields() {
        let x = exact_endpoint(
            &FieldSpec::Constant {
                velocity: vec![1.0, 0.0],
            },
            &[0.0, 0.0].into(),
        )
        .unwrap();
        assert_eq!(x.as_slice(), &[1.0, 0.0]);

        let x = exact_endpoint(
            &FieldSpec::Affine {
                rate: 1.0,
                offset: vec![0.0],
            },
            &[1.0].into(),
        )
        .unwrap();
        assert_relative_eq!(x[0], std::f64::consts::E, epsilon = 1e-15);

        let x = exact_endpoint(&FieldSpec::Rotation { omega: PI / 2.0 }, &[1.0, 0.0].into())
            .unwrap();
        assert_relative_eq!(x[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn exact_endpoint_rejects_learned() {
        let spec = FieldSpec::Learned {
            weights: "w.bin".into(),
        };
        assert_eq!(
            exact_endpoint(&spec, &[0.0, 0.0].into()),
            Err(Error::UnsupportedOracle("learned"))
        );
    }

    #[test]
    fn quarter_turn_matches_fine_euler() {
        // independent check of the rotation closed form
        let spec = FieldSpec::Rotation { omega: PI / 2.0 };
        let x = euler_reference(&spec, &[1.0, 0.0].into(), 1_000_000);
        assert!((x[0] - 0.0).abs() < 1e-5, "{x:?}");
        assert!((x[1] - 1.0).abs() < 1e-5, "{x:?}");
    }

    #[test]
    fn fine_euler_agrees_with_closed_form_for_every_kind() {
        let specs = [
            FieldSpec::Constant {
                velocity: vec![0.3, -1.2, 2.0],
            },
            FieldSpec::Affine {
                rate: -0.7,
                offset: vec![0.5, 1.0],
            },
            FieldSpec::Rotation { omega: 2.0 * PI },
            FieldSpec::Rotation { omega: 0.1 },
            FieldSpec::PiecewiseCurvature {
                velocity: vec![1.0, 0.5],
                omega: 3.0,
                breakpoints: vec![0.25, 0.6, 0.8],
            },
        ];
        for spec in &specs {
            let x0: StateVector = match spec.dimension().unwrap() {
                3 => [0.2, -0.4, 1.0].into(),
                _ => [0.7, -0.3].into(),
            };
            let exact = exact_endpoint(spec, &x0).unwrap();
            let approx = euler_reference(spec, &x0, 1_000_000);
            let err = crate::state::distance(&exact, &approx) / exact.norm().max(1.0);
            assert!(err < 1e-4, "{spec:?}: relative error {err}");
        }
    }

    #[test]
    fn rotation_norm_drift_shrinks_with_steps() {
        let spec = FieldSpec::Rotation { omega: 2.0 };
        let x0: StateVector = [1.0, 0.0].into();
        let drift = |n| (euler_reference(&spec, &x0, n).norm() - 1.0).abs();
        let (a, b, c) = (drift(10), drift(100), drift(1000));
        assert!(a > b && b > c, "{a} {b} {c}");
        assert_relative_eq!(exact_endpoint(&spec, &x0).unwrap().norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn piecewise_heading_is_continuous_and_accumulates() {
        let f = PiecewiseCurvatureField {
            velocity: [1.0, 0.0],
            omega: 2.0,
            breakpoints: vec![0.2, 0.5, 0.8],
        };
        assert_eq!(f.heading(0.1), 0.0);
        assert_eq!(f.heading(0.2), 0.0);
        assert_relative_eq!(f.heading(0.4), 0.4, epsilon = 1e-15);
        assert_relative_eq!(f.heading(0.65), 0.6, epsilon = 1e-15);
        assert_relative_eq!(f.heading(1.0), 0.6 + 0.4, epsilon = 1e-15);
    }

    #[test]
    fn piecewise_validation() {
        let mk = |b: Vec<f64>| FieldSpec::PiecewiseCurvature {
            velocity: vec![1.0, 0.0],
            omega: 1.0,
            breakpoints: b,
        };
        assert!(mk(vec![0.3, 0.6]).validate().is_ok());
        assert!(mk(vec![0.6, 0.3]).validate().is_err());
        assert!(mk(vec![0.0, 0.3]).validate().is_err());
        assert!(mk(vec![0.3, 1.0]).validate().is_err());
        assert!(mk(vec![]).validate().is_err());
    }
}
