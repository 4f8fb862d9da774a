use std::ops::Deref;

use serde::{Deserialize, Serialize};

macro_rules! real_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(Vec<f64>);

        impl $name {
            pub fn new(components: Vec<f64>) -> Self {
                Self(components)
            }

            pub fn zeros(dim: usize) -> Self {
                Self(vec![0.0; dim])
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn as_mut_slice(&mut self) -> &mut [f64] {
                &mut self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }

            pub fn norm(&self) -> f64 {
                norm(&self.0)
            }
        }

        impl Deref for $name {
            type Target = [f64];

            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }

        impl<const N: usize> From<[f64; N]> for $name {
            fn from(v: [f64; N]) -> Self {
                Self(v.to_vec())
            }
        }
    };
}

real_vector!(
    /// A point in sample space.
    StateVector
);
real_vector!(
    /// Velocity returned by a vector field, same dimension as the state it was evaluated at.
    Velocity
);
real_vector!(
    /// Opaque conditioning context. Empty for unconditional fields.
    Condition
);

impl StateVector {
    /// `self + h * v`, evaluated componentwise as `x + v * h`.
    pub fn advanced(&self, v: &[f64], h: f64) -> StateVector {
        debug_assert_eq!(self.0.len(), v.len());
        StateVector(self.0.iter().zip(v).map(|(x, v)| x + v * h).collect())
    }
}

impl Condition {
    pub fn empty() -> Self {
        Self(Vec::new())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
