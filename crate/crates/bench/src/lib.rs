//! Input generators shared by the benchmarks.

use rand::Rng;

use metricre_core::eval::{simulate_curves, SimulationSpec};
use metricre_core::seeding::rng_from_seed;
use metricre_core::{LongitudinalDataset, MetricKind, PointCloud};

pub fn uniform_cloud(m: usize, dim: usize, seed: u64) -> PointCloud {
    let mut rng = rng_from_seed(seed);
    let points = (0..m)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    PointCloud::uniform(points).expect("valid cloud")
}

pub fn weighted_cloud(m: usize, dim: usize, seed: u64) -> PointCloud {
    let mut rng = rng_from_seed(seed);
    let points = (0..m)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(1..=9) as f64).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    PointCloud::new(points, weights).expect("valid cloud")
}

/// Regression inputs for a single boosted model: covariates and a smooth target.
pub fn regression_rows(n: usize, p: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = rng_from_seed(seed);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| rng.random::<f64>()).collect())
        .collect();
    let y = x
        .iter()
        .map(|r| (6.0 * r[0]).sin() + r.get(1).copied().unwrap_or(0.0).powi(2) + 0.1 * rng.random::<f64>())
        .collect();
    (x, y)
}

pub fn curve_dataset(n_subjects: usize, visits: usize, seed: u64) -> LongitudinalDataset {
    simulate_curves(&SimulationSpec {
        metric_kind: MetricKind::Curve,
        n_subjects,
        visits_per_subject: visits,
        sigma_b: 2.0,
        sigma_eps: 0.5,
        covariate_dim: 2,
        seed,
        cloud_size: 100,
    })
    .expect("valid spec")
    .dataset
}
