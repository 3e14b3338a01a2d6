//! Empirical consistency of the curve predictor as the number of subjects grows.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::simulate::{curve_oracle, simulate_curves, SimulationSpec};
use super::{fit_holdout, HoldoutConfig};
use crate::data::{CovariateVector, MetricKind, ResponseObject, SubjectId};
use crate::error::{Error, Result};
use crate::metrics::l2_squared;
use crate::predict::{batch_predict, CandidateSet, PredictionMode, PredictionRequest};
use crate::seeding;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsistencyConfig {
    /// Template; `n_subjects` and `seed` are overridden per replicate.
    pub spec: SimulationSpec,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub holdout: HoldoutConfig,
    pub mode: PredictionMode,
    /// Query covariates, shared by every replicate and grid point.
    pub n_query_points: usize,
    /// Queries are made for subjects s0000.. up to this count.
    pub n_query_subjects: usize,
    pub seed: u64,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        ConsistencyConfig {
            spec: SimulationSpec {
                metric_kind: MetricKind::Curve,
                visits_per_subject: 6,
                sigma_b: 1.0,
                sigma_eps: 0.5,
                ..SimulationSpec::default()
            },
            n_grid: vec![25, 50, 100],
            replicates: 20,
            holdout: HoldoutConfig {
                max_anchors: Some(30),
                ..HoldoutConfig::default()
            },
            mode: PredictionMode::WithRe,
            n_query_points: 5,
            n_query_subjects: 5,
            seed: 0,
        }
    }
}

impl ConsistencyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.spec.metric_kind != MetricKind::Curve {
            return Err(Error::InvalidConfig("consistency study runs on curves only".into()));
        }
        if self.n_grid.is_empty() || self.replicates == 0 {
            return Err(Error::InvalidConfig("need a non-empty grid and at least one replicate".into()));
        }
        if self.n_query_points == 0 || self.n_query_subjects == 0 {
            return Err(Error::InvalidConfig("need at least one query point and subject".into()));
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n < self.n_query_subjects.max(2)) {
            return Err(Error::InvalidConfig(format!(
                "grid value {n} is smaller than the number of query subjects"
            )));
        }
        self.holdout.fit.validate()
    }

    fn query_points(&self) -> Vec<Vec<f64>> {
        let mut rng = seeding::derived_rng(self.seed, "consistency/queries");
        (0..self.n_query_points)
            .map(|_| (0..self.spec.covariate_dim).map(|_| rng.random::<f64>()).collect())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub n: usize,
    pub mean_sq_error: f64,
    pub std_sq_error: f64,
    pub per_replicate: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyTable {
    pub rows: Vec<ConsistencyRow>,
}

impl ConsistencyTable {
    pub fn is_strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].mean_sq_error < w[0].mean_sq_error)
    }
}

pub fn replicate_seed(seed: u64, n: usize, rep: usize) -> u64 {
    seeding::derive_seed(seed, &format!("consistency/n{n}/rep{rep}"))
}

/// Mean squared L2 error between predicted and noiseless target curves over the query set.
fn run_replicate(cfg: &ConsistencyConfig, queries: &[Vec<f64>], n: usize, rep: usize) -> Result<f64> {
    let seed = replicate_seed(cfg.seed, n, rep);
    let spec = SimulationSpec {
        n_subjects: n,
        seed,
        ..cfg.spec.clone()
    };
    let sim = simulate_curves(&spec)?;
    let ds = &sim.dataset;
    let (_, fit) = fit_holdout(ds, &cfg.holdout, seed)?;
    let candidates = CandidateSet::from_fit(&fit, ds)?;

    let mut requests = Vec::new();
    let mut targets = Vec::new();
    for s in 0..cfg.n_query_subjects {
        let id = SubjectId::new(super::simulate::subject_label(s))?;
        let b = sim.subject_effects[&id];
        for x in queries {
            let cov = CovariateVector::new(x.clone())?;
            requests.push(PredictionRequest {
                x: cov,
                subject: Some(id.clone()),
                mode: cfg.mode,
                record_scores: false,
            });
            targets.push(curve_oracle(x, b));
        }
    }
    let results = batch_predict(&fit.ensemble, &candidates, &requests)?;
    let mut total = 0.0;
    for (r, target) in results.iter().zip(&targets) {
        let ResponseObject::Curve(c) = &r.chosen_object else {
            return Err(Error::MetricMismatch {
                expected: MetricKind::Curve.to_string(),
                found: r.chosen_object.kind().to_string(),
            });
        };
        total += l2_squared(c, target)?;
    }
    Ok(total / results.len() as f64)
}

/// Runs every (n, replicate) cell independently and summarizes per n.
pub fn consistency_study(cfg: &ConsistencyConfig) -> Result<ConsistencyTable> {
    cfg.validate()?;
    let queries = cfg.query_points();
    let cells: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.replicates).map(move |r| (n, r)))
        .collect();
    let errors = cells
        .par_iter()
        .map(|&(n, r)| run_replicate(cfg, &queries, n, r))
        .collect::<Result<Vec<f64>>>()?;
    let rows = cfg
        .n_grid
        .iter()
        .zip(errors.chunks(cfg.replicates))
        .map(|(&n, errs)| {
            let k = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / k;
            let std = if errs.len() > 1 {
                (errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (k - 1.0)).sqrt()
            } else {
                0.0
            };
            ConsistencyRow {
                n,
                mean_sq_error: mean,
                std_sq_error: std,
                per_replicate: errs.to_vec(),
            }
        })
        .collect();
    Ok(ConsistencyTable { rows })
}
