//! Gaussian mixed-effects gradient boosting for one scalar target:
//! Z = f(X) + b_subject + eps, with f a sum of shrunken regression trees.
//!
//! Fitting alternates boosting steps on the intercept-adjusted residuals with
//! EM updates of the variance components and BLUP refreshes of the intercepts.

mod mixed;
mod tree;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{CovariateVector, SubjectId};
use crate::error::{Error, Result};

pub use mixed::{
    blup_groups, blup_intercepts, em_step_groups, em_variance_step, marginal_log_likelihood,
    marginal_log_likelihood_groups, VarianceComponents, SIGMA_SQ_FLOOR,
};
pub use tree::{fit_tree, fit_tree_presorted, RegressionTree, SortedFeatures, TreeNode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub n_iterations: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub max_leaves: usize,
    pub min_obs_per_leaf: usize,
    pub variance_update_every: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            n_iterations: 200,
            learning_rate: 0.05,
            max_depth: 6,
            max_leaves: 31,
            min_obs_per_leaf: 5,
            variance_update_every: 1,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_iterations < 1 {
            return bad("n_iterations must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be >= 1");
        }
        if self.max_leaves < 2 {
            return bad("max_leaves must be >= 2");
        }
        if self.min_obs_per_leaf < 1 {
            return bad("min_obs_per_leaf must be >= 1");
        }
        if self.variance_update_every < 1 {
            return bad("variance_update_every must be >= 1");
        }
        Ok(())
    }
}

/// Covariates and subject grouping shared by every model fitted on the same rows.
#[derive(Clone, Debug)]
pub struct TrainingDesign {
    features: SortedFeatures,
    feature_names: Vec<String>,
    subject_ids: Vec<SubjectId>,
    /// Subject position (into `subject_ids`) of each row.
    row_subject: Vec<usize>,
    /// Row indices of each subject.
    groups: Vec<Vec<usize>>,
}

impl TrainingDesign {
    pub fn new(x: &[Vec<f64>], subject_of_row: &[SubjectId], feature_names: Vec<String>) -> Result<Self> {
        if x.len() != subject_of_row.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} covariate rows but {} subject labels",
                x.len(),
                subject_of_row.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::InvalidDataset("need at least 2 training rows".into()));
        }
        let p = feature_names.len();
        if let Some(row) = x.iter().find(|r| r.len() != p) {
            return Err(Error::SchemaMismatch {
                expected: p,
                got: row.len(),
            });
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite covariate".into()));
        }
        let mut position: BTreeMap<&SubjectId, usize> = BTreeMap::new();
        for s in subject_of_row {
            let next = position.len();
            position.entry(s).or_insert(next);
        }
        // Re-number in sorted order so the intercept table is order independent.
        let subject_ids: Vec<SubjectId> = position.keys().map(|s| (*s).clone()).collect();
        let sorted_pos: BTreeMap<&SubjectId, usize> =
            position.keys().enumerate().map(|(i, s)| (*s, i)).collect();
        let row_subject: Vec<usize> = subject_of_row.iter().map(|s| sorted_pos[s]).collect();
        let mut groups = vec![Vec::new(); subject_ids.len()];
        for (r, &s) in row_subject.iter().enumerate() {
            groups[s].push(r);
        }
        Ok(TrainingDesign {
            features: SortedFeatures::new(x),
            feature_names,
            subject_ids,
            row_subject,
            groups,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.n_rows()
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn subject_ids(&self) -> &[SubjectId] {
        &self.subject_ids
    }

    fn residual_groups(&self, residual: &[f64]) -> Vec<Vec<f64>> {
        self.groups
            .iter()
            .map(|rows| rows.iter().map(|&r| residual[r]).collect())
            .collect()
    }
}

/// Boosted fixed effect plus per-subject random intercepts for one target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedBoostModel {
    pub base_value: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    pub intercepts: BTreeMap<SubjectId, f64>,
    pub variance: VarianceComponents,
    pub feature_schema: Vec<String>,
    pub config: FitConfig,
    /// Negative marginal log-likelihood after each variance update.
    pub training_loss: Vec<f64>,
}

impl MixedBoostModel {
    fn check_schema(&self, x: &CovariateVector) -> Result<()> {
        if x.len() != self.feature_schema.len() {
            return Err(Error::SchemaMismatch {
                expected: self.feature_schema.len(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// base_value + eta * sum of tree outputs.
    pub fn predict_fixed_raw(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        self.base_value + self.learning_rate * sum
    }

    pub fn predict_fixed(&self, x: &CovariateVector) -> Result<f64> {
        self.check_schema(x)?;
        Ok(self.predict_fixed_raw(x.values()))
    }

    /// Estimated intercept of `subject`, zero when it was not in training.
    pub fn intercept(&self, subject: &SubjectId) -> f64 {
        self.intercepts.get(subject).copied().unwrap_or(0.0)
    }

    pub fn predict_with_intercept(&self, x: &CovariateVector, subject: &SubjectId) -> Result<f64> {
        Ok(self.predict_fixed(x)? + self.intercept(subject))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse {
            context: "model json".into(),
            message: e.to_string(),
        })
    }
}

fn population_variance(z: &[f64]) -> f64 {
    let m = z.iter().sum::<f64>() / z.len() as f64;
    z.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / z.len() as f64
}

pub fn fit_mixed_boost(
    x: &[Vec<f64>],
    z: &[f64],
    subject_of_row: &[SubjectId],
    feature_names: Vec<String>,
    cfg: &FitConfig,
) -> Result<MixedBoostModel> {
    let design = TrainingDesign::new(x, subject_of_row, feature_names)?;
    fit_mixed_boost_on(&design, z, cfg)
}

pub fn fit_mixed_boost_on(design: &TrainingDesign, z: &[f64], cfg: &FitConfig) -> Result<MixedBoostModel> {
    cfg.validate()?;
    let n = design.n_rows();
    if z.len() != n {
        return Err(Error::ShapeMismatch(format!("{} targets for {n} rows", z.len())));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidDataset("non-finite target".into()));
    }

    let base_value = z.iter().sum::<f64>() / n as f64;
    let var_z = population_variance(z);
    let mut vc = VarianceComponents::new(var_z / 2.0, var_z);
    let mut intercepts = vec![0.0; design.n_subjects()];
    let mut tree_sum = vec![0.0; n];
    let mut trees = Vec::with_capacity(cfg.n_iterations);
    let mut training_loss = Vec::new();
    let eta = cfg.learning_rate;

    let fixed = |tree_sum: &[f64], r: usize| base_value + eta * tree_sum[r];
    let mut pseudo = vec![0.0; n];
    let mut residual = vec![0.0; n];

    let mut update = |tree_sum: &[f64], vc: &mut VarianceComponents, intercepts: &mut Vec<f64>| {
        for r in 0..n {
            residual[r] = z[r] - fixed(tree_sum, r);
        }
        let groups = design.residual_groups(&residual);
        *vc = em_step_groups(&groups, vc);
        *intercepts = blup_groups(&groups, vc);
        -marginal_log_likelihood_groups(&groups, vc)
    };

    for m in 1..=cfg.n_iterations {
        for r in 0..n {
            pseudo[r] = z[r] - fixed(&tree_sum, r) - intercepts[design.row_subject[r]];
        }
        let tree = fit_tree_presorted(&design.features, &pseudo, cfg);
        for (r, acc) in tree_sum.iter_mut().enumerate() {
            *acc += tree.predict(design.features.row(r));
        }
        trees.push(tree);
        if m % cfg.variance_update_every == 0 {
            training_loss.push(update(&tree_sum, &mut vc, &mut intercepts));
        }
    }
    if !cfg.n_iterations.is_multiple_of(cfg.variance_update_every) {
        training_loss.push(update(&tree_sum, &mut vc, &mut intercepts));
    }

    Ok(MixedBoostModel {
        base_value,
        learning_rate: eta,
        trees,
        intercepts: design.subject_ids.iter().cloned().zip(intercepts).collect(),
        variance: vc,
        feature_schema: design.feature_names.clone(),
        config: cfg.clone(),
        training_loss,
    })
}
