//! Seeded field corpora.
//!
//! Every preset draws unit-speed planar fields. Piecewise fields have a single
//! breakpoint `b ~ U[0.2, 0.4]`, so they run straight on `[0, b)` and turn on
//! `[b, 1]`. Turning rates for curved fields are log-uniform.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fields::FieldSpec;
use crate::state::StateVector;
use crate::toy::sample_standard_normal;

/// Turning-rate ceiling for the near-straight members.
pub const NEAR_STRAIGHT_MAX_OMEGA: f64 = 0.02;

/// Log-uniform turning-rate bands for the curved 30% of the mixed corpus,
/// one band per residue 7, 8, 9 of the index modulo 10.
pub const MIXED_CURVED_BANDS: [(f64, f64); 3] = [(0.05, 0.3), (0.3, 1.0), (2.0, 6.0)];

pub const PIECEWISE_OMEGA_RANGE: (f64, f64) = (0.05, 3.0);
pub const ROTATION_OMEGA_RANGE: (f64, f64) = (0.1, TAU);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    NearStraight,
    Rotation,
    Piecewise,
    /// Seven near-straight fields in every ten, the rest curved piecewise.
    Mixed,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::NearStraight => "near-straight",
            Preset::Rotation => "rotation",
            Preset::Piecewise => "piecewise",
            Preset::Mixed => "mixed",
        }
    }
}

fn log_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

fn piecewise<R: Rng>(rng: &mut R, omega: f64) -> FieldSpec {
    let heading = rng.random_range(0.0..TAU);
    FieldSpec::PiecewiseCurvature {
        velocity: vec![heading.cos(), heading.sin()],
        omega,
        breakpoints: vec![rng.random_range(0.2..0.4)],
    }
}

pub fn generate(preset: Preset, count: usize, seed: u64) -> Vec<FieldSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| match preset {
            Preset::NearStraight => {
                let omega = rng.random_range(0.0..NEAR_STRAIGHT_MAX_OMEGA);
                piecewise(&mut rng, omega)
            }
            Preset::Rotation => FieldSpec::Rotation {
                omega: log_uniform(&mut rng, ROTATION_OMEGA_RANGE),
            },
            Preset::Piecewise => {
                let omega = log_uniform(&mut rng, PIECEWISE_OMEGA_RANGE);
                piecewise(&mut rng, omega)
            }
            Preset::Mixed => {
                let omega = match i % 10 {
                    k @ 7..=9 => log_uniform(&mut rng, MIXED_CURVED_BANDS[k - 7]),
                    _ => rng.random_range(0.0..NEAR_STRAIGHT_MAX_OMEGA),
                };
                piecewise(&mut rng, omega)
            }
        })
        .collect()
}

/// `count` independent `N(0, I)` draws of dimension `dim`.
pub fn initial_states(dim: usize, count: usize, seed: u64) -> Vec<StateVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| sample_standard_normal(dim, &mut rng)).collect()
}
