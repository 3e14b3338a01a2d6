//! Squared distances on the three response spaces.

mod graph;
pub mod ot;
mod pairwise;

use crate::data::{Curve, Laplacian, PointCloud, ResponseObject};
use crate::error::{Error, Result};

pub use graph::{build_laplacian, pearson_correlation, GraphBuildConfig};
pub use pairwise::{pairwise_between, pairwise_squared_distances, DistanceMatrix};

/// Trapezoidal approximation of the integral of (a - b)^2 over the shared grid.
pub fn l2_squared(a: &Curve, b: &Curve) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::ShapeMismatch("curves are sampled on different grids".into()));
    }
    let grid = a.grid();
    let sq: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .collect();
    let total = grid
        .windows(2)
        .zip(sq.windows(2))
        .map(|(t, f)| 0.5 * (t[1] - t[0]) * (f[0] + f[1]))
        .sum();
    Ok(total)
}

fn squared_euclidean(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Fixed total order on clouds, used to make solver output bitwise symmetric.
fn cloud_order(a: &PointCloud, b: &PointCloud) -> std::cmp::Ordering {
    let bits = |c: &PointCloud| {
        c.weights()
            .iter()
            .chain(c.points().flatten())
            .map(|v| v.to_bits())
            .collect::<Vec<u64>>()
    };
    a.len()
        .cmp(&b.len())
        .then(a.dim().cmp(&b.dim()))
        .then_with(|| bits(a).cmp(&bits(b)))
}

/// Exact squared 2-Wasserstein distance between two discrete measures.
///
/// The result is bitwise symmetric in its arguments.
pub fn w2_squared(mu: &PointCloud, nu: &PointCloud) -> Result<f64> {
    if cloud_order(mu, nu).is_gt() {
        return w2_squared(nu, mu);
    }
    if mu.dim() != nu.dim() {
        return Err(Error::ShapeMismatch(format!(
            "point clouds live in R^{} and R^{}",
            mu.dim(),
            nu.dim()
        )));
    }
    let (m, n) = (mu.len(), nu.len());
    let mut cost = Vec::with_capacity(m * n);
    for p in mu.points() {
        for q in nu.points() {
            cost.push(squared_euclidean(p, q));
        }
    }
    if m == n && mu.is_uniform() && nu.is_uniform() {
        let (_, total) = ot::min_cost_assignment(&cost, m);
        return Ok((total / m as f64).max(0.0));
    }
    let plan = ot::transport_simplex(mu.weights(), nu.weights(), &cost)?;
    Ok(plan.cost.max(0.0))
}

/// (1/H^2) times the squared Frobenius norm of L - L'.
pub fn frobenius_laplacian_squared(a: &Laplacian, b: &Laplacian) -> Result<f64> {
    if a.size() != b.size() {
        return Err(Error::ShapeMismatch(format!(
            "laplacians of size {} and {}",
            a.size(),
            b.size()
        )));
    }
    let h = a.size();
    if h == 0 {
        return Ok(0.0);
    }
    let sum: f64 = a
        .entries()
        .iter()
        .zip(b.entries())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / (h * h) as f64)
}

/// Squared distance in the metric matching the objects' kind.
pub fn squared_distance(a: &ResponseObject, b: &ResponseObject) -> Result<f64> {
    match (a, b) {
        (ResponseObject::Curve(x), ResponseObject::Curve(y)) => l2_squared(x, y),
        (ResponseObject::PointCloud(x), ResponseObject::PointCloud(y)) => w2_squared(x, y),
        (ResponseObject::Laplacian(x), ResponseObject::Laplacian(y)) => {
            frobenius_laplacian_squared(x, y)
        }
        _ => Err(Error::MetricMismatch {
            expected: a.kind().to_string(),
            found: b.kind().to_string(),
        }),
    }
}
