//! Endpoint error, per-solver run aggregation and sample-set distances.
//!
//! Every sum in this module runs over values sorted ascending, which makes
//! the results bitwise independent of input order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::solvers::SolveReport;
use crate::state::{distance, dot, norm, StateVector};
use crate::{Error, Result};

/// Relative endpoint error below which a run counts as a success.
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 1e-2;

/// Random projections used by the sliced-Wasserstein distance.
pub const SLICED_PROJECTIONS: usize = 64;
const SLICED_SEED: u64 = 0x51_1CED;

/// `||x - x*|| / max(||x*||, 1)`.
///
/// # Panics
/// If the dimensions differ.
pub fn endpoint_error(endpoint: &[f64], oracle: &[f64]) -> f64 {
    assert_eq!(endpoint.len(), oracle.len(), "endpoint/oracle dimension mismatch");
    distance(endpoint, oracle) / norm(oracle).max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub solver: String,
    pub runs: usize,
    pub mean_steps: f64,
    pub std_steps: Option<f64>,
    pub mean_nfe: f64,
    pub std_nfe: Option<f64>,
    pub mean_wall_time_s: f64,
    pub p95_wall_time_s: f64,
    pub mean_error: f64,
    pub success_rate: f64,
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn mean(v: &[f64]) -> f64 {
    sorted(v.to_vec()).iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; `None` for fewer than two values.
fn std_dev(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = mean(v);
    let sq = sorted(v.iter().map(|x| (x - m) * (x - m)).collect());
    Some((sq.iter().sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

/// Nearest-rank percentile, `q` in `(0, 1]`.
fn percentile(v: &[f64], q: f64) -> f64 {
    let s = sorted(v.to_vec());
    let rank = (q * s.len() as f64).ceil() as usize;
    s[rank.clamp(1, s.len()) - 1]
}

pub fn aggregate(reports: &[SolveReport], oracles: &[StateVector], success_threshold: f64) -> Result<RunAggregate> {
    if reports.is_empty() {
        return Err(Error::Contract("cannot aggregate zero runs".into()));
    }
    if reports.len() != oracles.len() {
        return Err(Error::Contract(format!(
            "{} reports but {} oracles",
            reports.len(),
            oracles.len()
        )));
    }
    let steps: Vec<f64> = reports.iter().map(|r| r.steps_taken as f64).collect();
    let nfe: Vec<f64> = reports.iter().map(|r| r.nfe as f64).collect();
    let wall: Vec<f64> = reports.iter().map(|r| r.wall_time_s).collect();
    let errors: Vec<f64> = reports
        .iter()
        .zip(oracles)
        .map(|(r, o)| endpoint_error(&r.endpoint, o))
        .collect();
    let successes = errors.iter().filter(|&&e| e < success_threshold).count();

    let mut names: Vec<&str> = reports.iter().map(|r| r.solver.as_str()).collect();
    names.sort_unstable();
    names.dedup();

    Ok(RunAggregate {
        solver: names.join("+"),
        runs: reports.len(),
        mean_steps: mean(&steps),
        std_steps: std_dev(&steps),
        mean_nfe: mean(&nfe),
        std_nfe: std_dev(&nfe),
        mean_wall_time_s: mean(&wall),
        p95_wall_time_s: percentile(&wall, 0.95),
        mean_error: mean(&errors),
        success_rate: successes as f64 / reports.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceKind {
    /// `2 E|X - Y| - E|X - X'| - E|Y - Y'|` over all pairs including `i == j`,
    /// reported without a square root.
    EnergyDistance,
    /// Mean 1-D Wasserstein-1 distance over [`SLICED_PROJECTIONS`] fixed random directions.
    SlicedWasserstein,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionDistance {
    pub value: f64,
    pub kind: DistanceKind,
}

pub fn distribution_distance(a: &[StateVector], b: &[StateVector], kind: DistanceKind) -> Result<DistributionDistance> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("distribution distance needs non-empty sample sets".into()));
    }
    let dim = a[0].dim();
    if let Some(bad) = a.iter().chain(b).find(|x| x.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    let value = match kind {
        DistanceKind::EnergyDistance => {
            let cross = mean_pairwise(a, b);
            let within = mean_pairwise(a, a) + mean_pairwise(b, b);
            (2.0 * cross - within).max(0.0)
        }
        DistanceKind::SlicedWasserstein => sliced_wasserstein(a, b, dim),
    };
    Ok(DistributionDistance { value, kind })
}

fn mean_pairwise(a: &[StateVector], b: &[StateVector]) -> f64 {
    let d: Vec<f64> = a
        .iter()
        .flat_map(|x| b.iter().map(move |y| distance(x, y)))
        .collect();
    mean(&d)
}

fn sliced_wasserstein(a: &[StateVector], b: &[StateVector], dim: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(SLICED_SEED);
    let mut total = Vec::with_capacity(SLICED_PROJECTIONS);
    for _ in 0..SLICED_PROJECTIONS {
        let mut dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm(&dir);
        dir.iter_mut().for_each(|v| *v /= n);
        let pa = sorted(a.iter().map(|x| dot(x, &dir)).collect());
        let pb = sorted(b.iter().map(|x| dot(x, &dir)).collect());
        total.push(wasserstein_1d(&pa, &pb));
    }
    mean(&total)
}

/// `integral |F_a - F_b|` for sorted samples of any sizes.
fn wasserstein_1d(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = a[0].min(b[0]);
    let mut pieces = Vec::with_capacity(a.len() + b.len());
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        let gap = (i as f64 / na - j as f64 / nb).abs();
        pieces.push(gap * (next - prev));
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        prev = next;
    }
    pieces.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(steps: usize, endpoint: Vec<f64>, wall: f64) -> SolveReport {
        SolveReport {
            solver: "euler".into(),
            endpoint: endpoint.into(),
            steps_taken: steps,
            nfe: steps as u64,
            step_record: Vec::new(),
            wall_time_s: wall,
            probe_similarity: None,
            scheduled_n: None,
        }
    }

    #[test]
    fn endpoint_error_examples() {
        assert_eq!(endpoint_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(endpoint_error(&[1.0, 0.0], &[0.0, 0.0]), 1.0);
        let e = endpoint_error(&[1.001f64.powi(1000)], &[std::f64::consts::E]);
        assert!((e - 4.995e-4).abs() < 1e-6, "{e}");
    }

    #[test]
    fn aggregate_single_perfect_run() {
        let a = aggregate(&[report(3, vec![1.0], 0.1)], &[vec![1.0].into()], 1e-2).unwrap();
        assert_eq!(a.success_rate, 1.0);
        assert_eq!(a.mean_error, 0.0);
        assert_eq!(a.std_steps, None);
        assert_eq!(a.p95_wall_time_s, 0.1);
    }

    #[test]
    fn aggregate_success_rate_and_means() {
        let t = 1e-2;
        let a = aggregate(
            &[report(2, vec![0.0], 0.0), report(2, vec![2.0 * t], 0.0)],
            &[vec![0.0].into(), vec![0.0].into()],
            t,
        )
        .unwrap();
        assert_eq!(a.success_rate, 0.5);

        let reps: Vec<_> = [2, 2, 2, 10].iter().map(|&s| report(s, vec![0.0], 0.0)).collect();
        let oracles = vec![StateVector::from(vec![0.0]); 4];
        let a = aggregate(&reps, &oracles, t).unwrap();
        assert_eq!(a.mean_steps, 4.0);
        assert_eq!(a.std_steps, Some(4.0));
    }

    #[test]
    fn aggregate_rejects_empty_and_mismatched() {
        assert!(aggregate(&[], &[], 1e-2).is_err());
        assert!(aggregate(&[report(1, vec![0.0], 0.0)], &[], 1e-2).is_err());
    }

    #[test]
    fn p95_nearest_rank() {
        let v: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        assert_eq!(percentile(&v, 0.95), 19.0);
        assert_eq!(percentile(&[5.0, 1.0], 0.95), 5.0);
    }

    #[test]
    fn energy_distance_examples() {
        let a: Vec<StateVector> = vec![[0.0, 0.0].into()];
        let b: Vec<StateVector> = vec![[1.0, 0.0].into()];
        let d = distribution_distance(&a, &b, DistanceKind::EnergyDistance).unwrap();
        assert_eq!(d.value, 2.0);
        let d = distribution_distance(&a, &a, DistanceKind::EnergyDistance).unwrap();
        assert_eq!(d.value, 0.0);
    }

    #[test]
    fn sliced_wasserstein_of_point_masses() {
        // in one dimension every unit direction is +1 or -1
        let a: Vec<StateVector> = vec![[0.0].into(), [0.0].into()];
        let b: Vec<StateVector> = vec![[1.5].into()];
        let d = distribution_distance(&a, &b, DistanceKind::SlicedWasserstein).unwrap();
        assert!((d.value - 1.5).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_1d_unequal_sizes() {
        // {0, 1} vs {0.5}: |F_a - F_b| = 1/2 on [0, 1]
        assert!((wasserstein_1d(&[0.0, 1.0], &[0.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn distance_dimension_mismatch() {
        let a: Vec<StateVector> = vec![[0.0, 0.0].into()];
        let b: Vec<StateVector> = vec![[1.0].into()];
        assert!(matches!(
            distribution_distance(&a, &b, DistanceKind::EnergyDistance),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(distribution_distance(&[], &b, DistanceKind::EnergyDistance).is_err());
    }
}
