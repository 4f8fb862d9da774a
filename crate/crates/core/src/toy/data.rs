use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::state::StateVector;

/// Target distributions for toy training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Dataset {
    /// Degenerate target: every draw is `target`.
    SinglePoint { target: Vec<f64> },
    /// Equal-weight mixture of two isotropic Gaussians.
    TwoGaussians { means: [[f64; 2]; 2], std: f64 },
    /// The classic interleaved half-circles, centred near the origin.
    TwoMoons { noise: f64 },
}

impl Dataset {
    pub fn two_gaussians() -> Self {
        Dataset::TwoGaussians {
            means: [[-2.0, 0.0], [2.0, 0.0]],
            std: 0.3,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Dataset::SinglePoint { target } => target.len(),
            Dataset::TwoGaussians { .. } | Dataset::TwoMoons { .. } => 2,
        }
    }

    pub fn sample_target<R: Rng + ?Sized>(&self, rng: &mut R) -> StateVector {
        match self {
            Dataset::SinglePoint { target } => target.clone().into(),
            Dataset::TwoGaussians { means, std } => {
                let m = means[usize::from(rng.random::<bool>())];
                let (a, b): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
                [m[0] + std * a, m[1] + std * b].into()
            }
            Dataset::TwoMoons { noise } => {
                let theta = rng.random::<f64>() * PI;
                let (a, b): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
                let (x, y) = if rng.random::<bool>() {
                    (theta.cos(), theta.sin())
                } else {
                    (1.0 - theta.cos(), 0.5 - theta.sin())
                };
                [x - 0.5 + noise * a, y - 0.25 + noise * b].into()
            }
        }
    }
}

pub fn standard_normal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> StateVector {
    (0..dim)
        .map(|_| StandardNormal.sample(rng))
        .collect::<Vec<f64>>()
        .into()
}

/// `(x0, x1)` with `x0 ~ N(0, I)` and `x1` from `dataset`, drawn independently.
pub fn sample_pair<R: Rng + ?Sized>(dataset: &Dataset, rng: &mut R) -> (StateVector, StateVector) {
    let x0 = standard_normal(dataset.dim(), rng);
    let x1 = dataset.sample_target(rng);
    (x0, x1)
}
