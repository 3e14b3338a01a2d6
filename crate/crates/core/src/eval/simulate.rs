//! Synthetic longitudinal datasets for the three response spaces.

use std::collections::BTreeMap;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{
    CovariateVector, Curve, LongitudinalDataset, MetricKind, PointCloud, ResponseObject, Subject, SubjectId,
    Visit, VisitKey,
};
use crate::error::{Error, Result};
use crate::metrics::{build_laplacian, GraphBuildConfig};
use crate::seeding::{self, Rng};

pub const CURVE_GRID_POINTS: usize = 48;
const CLOUD_SCALE: [f64; 3] = [1.0, 0.5, 0.25];
const MAX_GRAPH_RESAMPLES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSpec {
    pub metric_kind: MetricKind,
    pub n_subjects: usize,
    pub visits_per_subject: usize,
    pub sigma_b: f64,
    pub sigma_eps: f64,
    pub covariate_dim: usize,
    pub seed: u64,
    /// Points per cloud for the distribution simulator.
    pub cloud_size: usize,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            metric_kind: MetricKind::Curve,
            n_subjects: 50,
            visits_per_subject: 10,
            sigma_b: 1.0,
            sigma_eps: 0.5,
            covariate_dim: 2,
            seed: 0,
            cloud_size: 100,
        }
    }
}

impl SimulationSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_subjects < 2 {
            return bad(format!("n_subjects must be >= 2, got {}", self.n_subjects));
        }
        if self.visits_per_subject < 2 {
            return bad(format!("visits_per_subject must be >= 2, got {}", self.visits_per_subject));
        }
        if !(self.sigma_b >= 0.0 && self.sigma_b.is_finite()) {
            return bad(format!("sigma_b must be >= 0, got {}", self.sigma_b));
        }
        if !(self.sigma_eps >= 0.0 && self.sigma_eps.is_finite()) {
            return bad(format!("sigma_eps must be >= 0, got {}", self.sigma_eps));
        }
        if self.metric_kind == MetricKind::PointCloud && self.cloud_size == 0 {
            return bad("cloud_size must be >= 1".into());
        }
        Ok(())
    }
}

/// Noiseless conditional target for one visit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleTarget {
    Curve { values: Vec<f64> },
    Gaussian { mean: Vec<f64>, cov_diag: Vec<f64> },
    Graph { rho: f64 },
}

#[derive(Clone, Debug)]
pub struct SimulatedDataset {
    pub dataset: LongitudinalDataset,
    pub subject_effects: BTreeMap<SubjectId, f64>,
    pub oracle: BTreeMap<VisitKey, OracleTarget>,
}

pub fn subject_label(i: usize) -> String {
    format!("s{i:04}")
}

pub fn curve_grid() -> Vec<f64> {
    let step = 24.0 / (CURVE_GRID_POINTS - 1) as f64;
    (0..CURVE_GRID_POINTS).map(|k| k as f64 * step).collect()
}

/// mu(x, t) = x1 sin(2 pi t / 24) + x2, missing coordinates read as 0.
pub fn curve_mean(x: &[f64], t: f64) -> f64 {
    let x1 = x.first().copied().unwrap_or(0.0);
    let x2 = x.get(1).copied().unwrap_or(0.0);
    x1 * (2.0 * std::f64::consts::PI * t / 24.0).sin() + x2
}

/// Noiseless curve mu(x, .) + b on the simulation grid.
pub fn curve_oracle(x: &[f64], b: f64) -> Curve {
    let grid = curve_grid();
    let values = grid.iter().map(|&t| curve_mean(x, t) + b).collect();
    Curve::new(grid, values).expect("grid is valid")
}

pub fn cloud_mean(x: &[f64]) -> [f64; 3] {
    let x1 = x.first().copied().unwrap_or(0.0);
    let x2 = x.get(1).copied().unwrap_or(0.0);
    [2.0 * x1, 2.0 * x2, x1 + x2]
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Cross-hour correlation strength for covariates `x` and subject effect `b`.
pub fn graph_rho(x: &[f64], b: f64, noise: f64) -> f64 {
    let linear: f64 = x.iter().map(|v| 2.0 * (v - 0.5)).sum();
    logistic(linear + b + noise)
}

fn feature_names(p: usize) -> Vec<String> {
    (1..=p).map(|k| format!("x{k}")).collect()
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("sd is finite and >= 0")
}

struct Skeleton {
    subjects: Vec<(SubjectId, f64, Vec<Vec<f64>>)>,
}

/// Draws subject effects and covariates. Each subject gets its own stream so
/// the draws for subject i do not depend on the number of subjects.
fn skeleton(spec: &SimulationSpec) -> Result<Skeleton> {
    spec.validate()?;
    let b_dist = normal(spec.sigma_b);
    let subjects = (0..spec.n_subjects)
        .map(|i| {
            let label = subject_label(i);
            let mut rng = seeding::derived_rng(spec.seed, &format!("subject/{label}"));
            let b = b_dist.sample(&mut rng);
            let xs = (0..spec.visits_per_subject)
                .map(|_| (0..spec.covariate_dim).map(|_| rng.random::<f64>()).collect())
                .collect();
            (SubjectId::new(label).expect("non-empty"), b, xs)
        })
        .collect();
    Ok(Skeleton { subjects })
}

fn visit_rng(spec: &SimulationSpec, id: &SubjectId, visit: usize) -> Rng {
    seeding::derived_rng(spec.seed, &format!("visit/{id}/{visit}"))
}

fn assemble<F>(spec: &SimulationSpec, mut make: F) -> Result<SimulatedDataset>
where
    F: FnMut(&SubjectId, f64, &[f64], &mut Rng) -> Result<(ResponseObject, OracleTarget)>,
{
    let sk = skeleton(spec)?;
    let mut subject_effects = BTreeMap::new();
    let mut oracle = BTreeMap::new();
    let mut subjects = Vec::with_capacity(sk.subjects.len());
    for (id, b, xs) in sk.subjects {
        let mut visits = Vec::with_capacity(xs.len());
        for (j, x) in xs.into_iter().enumerate() {
            let mut rng = visit_rng(spec, &id, j);
            let (response, target) = make(&id, b, &x, &mut rng)?;
            oracle.insert(VisitKey::new(id.clone(), j as u32), target);
            visits.push(Visit {
                visit: j as u32,
                covariates: CovariateVector::new(x)?,
                response,
            });
        }
        subject_effects.insert(id.clone(), b);
        subjects.push(Subject { id, visits });
    }
    let dataset = LongitudinalDataset::new(feature_names(spec.covariate_dim), subjects)?;
    Ok(SimulatedDataset {
        dataset,
        subject_effects,
        oracle,
    })
}

/// Y(t) = mu(x, t) + b_i + eps(t) on 48 equally spaced points of [0, 24].
pub fn simulate_curves(spec: &SimulationSpec) -> Result<SimulatedDataset> {
    let grid = curve_grid();
    let eps = normal(spec.sigma_eps);
    assemble(spec, |_, b, x, rng| {
        let target: Vec<f64> = grid.iter().map(|&t| curve_mean(x, t) + b).collect();
        let values = target.iter().map(|m| m + eps.sample(rng)).collect();
        let curve = Curve::new(grid.clone(), values).map_err(Error::InvalidDataset)?;
        Ok((ResponseObject::Curve(curve), OracleTarget::Curve { values: target }))
    })
}

/// Each visit is a uniform cloud of iid draws from N(mu(x) + b 1, diag(1, 0.5, 0.25)).
pub fn simulate_distributions(spec: &SimulationSpec) -> Result<SimulatedDataset> {
    let cov_diag = CLOUD_SCALE.to_vec();
    let sds: Vec<f64> = CLOUD_SCALE.iter().map(|v| v.sqrt()).collect();
    assemble(spec, |_, b, x, rng| {
        let mu = cloud_mean(x);
        let mean: Vec<f64> = mu.iter().map(|m| m + b).collect();
        let points = (0..spec.cloud_size)
            .map(|_| {
                (0..3)
                    .map(|d| {
                        let z: f64 = StandardNormal.sample(rng);
                        mean[d] + sds[d] * z
                    })
                    .collect()
            })
            .collect();
        let cloud = PointCloud::uniform(points).map_err(Error::InvalidDataset)?;
        Ok((
            ResponseObject::PointCloud(cloud),
            OracleTarget::Gaussian {
                mean,
                cov_diag: cov_diag.clone(),
            },
        ))
    })
}

/// Hourly activity vectors with common cross-hour correlation rho.
fn equicorrelated_activity(rho: f64, cfg: &GraphBuildConfig, rng: &mut Rng) -> Vec<Vec<f64>> {
    let slots = cfg.slots_per_hour;
    let common: Vec<f64> = (0..slots).map(|_| StandardNormal.sample(rng)).collect();
    let (a, c) = (rho.sqrt(), (1.0 - rho).sqrt());
    (0..cfg.n_hours())
        .map(|_| {
            common
                .iter()
                .map(|z| {
                    let own: f64 = StandardNormal.sample(rng);
                    a * z + c * own
                })
                .collect()
        })
        .collect()
}

/// Thresholded-correlation graphs whose correlation strength depends on x and b_i.
pub fn simulate_graphs(spec: &SimulationSpec) -> Result<SimulatedDataset> {
    simulate_graphs_with(spec, &GraphBuildConfig::default())
}

pub fn simulate_graphs_with(spec: &SimulationSpec, cfg: &GraphBuildConfig) -> Result<SimulatedDataset> {
    cfg.validate()?;
    assemble(spec, |id, b, x, rng| {
        let xi: f64 = StandardNormal.sample(rng);
        let noise = spec.sigma_eps * xi;
        let rho = graph_rho(x, b, noise);
        for _ in 0..MAX_GRAPH_RESAMPLES {
            let activity = equicorrelated_activity(rho, cfg, rng);
            match build_laplacian(&activity, cfg) {
                Ok(l) => return Ok((ResponseObject::Laplacian(l), OracleTarget::Graph { rho })),
                Err(Error::UndefinedCorrelation { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::InvalidDataset(format!(
            "could not generate a non-degenerate activity pattern for {id}"
        )))
    })
}

/// Dispatches on `spec.metric_kind`.
pub fn simulate(spec: &SimulationSpec) -> Result<SimulatedDataset> {
    match spec.metric_kind {
        MetricKind::Curve => simulate_curves(spec),
        MetricKind::PointCloud => simulate_distributions(spec),
        MetricKind::Laplacian => simulate_graphs(spec),
    }
}
