//! Anchors, transformed distances and the per-anchor model ensemble.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boost::{fit_mixed_boost_on, FitConfig, MixedBoostModel, TrainingDesign};
use crate::data::{LongitudinalDataset, MetricKind, ResponseObject, SplitPlan, VisitKey};
use crate::error::{Error, Result};
use crate::metrics::pairwise_between;
use crate::seeding;

pub const DEFAULT_DELTA: f64 = 1e-8;
pub const ENSEMBLE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum AnchorPolicy {
    All,
    Subsample { k: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    anchors: Vec<VisitKey>,
    delta: f64,
}

impl AnchorSet {
    pub fn new(mut anchors: Vec<VisitKey>, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        if anchors.is_empty() {
            return Err(Error::InvalidConfig("anchor set is empty".into()));
        }
        anchors.sort();
        if anchors.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("duplicate anchor key".into()));
        }
        Ok(AnchorSet { anchors, delta })
    }

    pub fn keys(&self) -> &[VisitKey] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidConfig(format!("delta must be > 0, got {delta}")));
    }
    Ok(())
}

/// Picks anchors among the training visits, returned in key order.
pub fn select_anchors(train: &BTreeSet<VisitKey>, policy: &AnchorPolicy, delta: f64) -> Result<AnchorSet> {
    if train.is_empty() {
        return Err(Error::InvalidConfig("no training visits to draw anchors from".into()));
    }
    let keys: Vec<VisitKey> = match policy {
        AnchorPolicy::All => train.iter().cloned().collect(),
        AnchorPolicy::Subsample { k, seed } => {
            if *k > train.len() {
                return Err(Error::InvalidConfig(format!(
                    "cannot draw {k} anchors from {} training visits",
                    train.len()
                )));
            }
            if *k == 0 {
                return Err(Error::InvalidConfig("anchor count must be >= 1".into()));
            }
            let pool: Vec<&VisitKey> = train.iter().collect();
            let mut rng = seeding::derived_rng(*seed, "anchors");
            index::sample(&mut rng, pool.len(), *k)
                .into_iter()
                .map(|i| pool[i].clone())
                .collect()
        }
    };
    AnchorSet::new(keys, delta)
}

#[inline]
pub fn transform_value(d2: f64, delta: f64) -> f64 {
    (d2 + delta).ln()
}

/// Elementwise ln(d^2 + delta).
pub fn transform_distances(d2: &[f64], delta: f64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    if let Some(bad) = d2.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidDataset(format!("invalid squared distance {bad}")));
    }
    Ok(d2.iter().map(|&v| transform_value(v, delta)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub subject_id: crate::data::SubjectId,
    pub visit: u32,
    pub response: ResponseObject,
}

impl Anchor {
    pub fn key(&self) -> VisitKey {
        VisitKey::new(self.subject_id.clone(), self.visit)
    }
}

/// The trained artifact: anchors (with their response objects) and one model per anchor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorEnsemble {
    pub version: u32,
    pub metric_kind: MetricKind,
    pub delta: f64,
    pub feature_schema: Vec<String>,
    pub anchors: Vec<Anchor>,
    pub models: Vec<MixedBoostModel>,
}

impl AnchorEnsemble {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn anchor_keys(&self) -> Vec<VisitKey> {
        self.anchors.iter().map(Anchor::key).collect()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.anchors.is_empty() {
            return Err("no anchors".into());
        }
        if self.models.len() != self.anchors.len() {
            return Err(format!(
                "{} models for {} anchors",
                self.models.len(),
                self.anchors.len()
            ));
        }
        if !(self.delta > 0.0) {
            return Err("delta must be positive".into());
        }
        if let Some(a) = self.anchors.iter().find(|a| a.response.kind() != self.metric_kind) {
            return Err(format!("anchor {} is not a {}", a.key(), self.metric_kind));
        }
        if self.models.iter().any(|m| m.feature_schema != self.feature_schema) {
            return Err("model feature schema differs from ensemble schema".into());
        }
        Ok(())
    }
}

/// Ensemble plus the training-side quantities computed while fitting it.
#[derive(Clone, Debug)]
pub struct AnchorFit {
    pub ensemble: AnchorEnsemble,
    /// Training visits in key order; row order of `transformed`.
    pub training_keys: Vec<VisitKey>,
    /// Row-major |training| x |anchors| matrix of ln(d^2 + delta).
    pub transformed: Vec<f64>,
}

impl AnchorFit {
    pub fn transformed_row(&self, r: usize) -> &[f64] {
        let a = self.ensemble.len();
        &self.transformed[r * a..(r + 1) * a]
    }
}

pub fn fit_anchor_models(
    dataset: &LongitudinalDataset,
    split: &SplitPlan,
    anchors: &AnchorSet,
    cfg: &FitConfig,
) -> Result<AnchorEnsemble> {
    fit_anchor_models_detailed(dataset, split, anchors, cfg).map(|f| f.ensemble)
}

/// Fits one mixed-boost model per anchor on the training visits of `split`.
///
/// Anchor `a` is fitted with seed `derive_seed(cfg.seed, a)`, so models do not
/// depend on which other anchors are present or on the order of fitting.
pub fn fit_anchor_models_detailed(
    dataset: &LongitudinalDataset,
    split: &SplitPlan,
    anchors: &AnchorSet,
    cfg: &FitConfig,
) -> Result<AnchorFit> {
    cfg.validate()?;
    split.validate(dataset)?;
    if let Some(a) = anchors.keys().iter().find(|a| !split.train.contains(a)) {
        return Err(Error::InvalidConfig(format!("anchor {a} is not a training visit")));
    }
    let training_keys: Vec<VisitKey> = split.train.iter().cloned().collect();
    let train_objs = training_keys
        .iter()
        .map(|k| dataset.response(k))
        .collect::<Result<Vec<_>>>()?;
    let anchor_objs = anchors
        .keys()
        .iter()
        .map(|k| dataset.response(k))
        .collect::<Result<Vec<_>>>()?;
    let d2 = if training_keys == anchors.keys() {
        pairwise_between(&train_objs, &train_objs)?
    } else {
        pairwise_between(&train_objs, &anchor_objs)?
    };
    let transformed = transform_distances(&d2, anchors.delta())?;

    let x: Vec<Vec<f64>> = training_keys
        .iter()
        .map(|k| dataset.try_visit(k).map(|v| v.covariates.values().to_vec()))
        .collect::<Result<_>>()?;
    let subjects: Vec<_> = training_keys.iter().map(|k| k.subject_id.clone()).collect();
    let design = TrainingDesign::new(&x, &subjects, dataset.feature_names().to_vec())?;

    let n_anchors = anchors.len();
    let models = anchors
        .keys()
        .par_iter()
        .enumerate()
        .map(|(col, key)| {
            let z: Vec<f64> = (0..training_keys.len())
                .map(|r| transformed[r * n_anchors + col])
                .collect();
            let anchor_cfg = FitConfig {
                seed: seeding::derive_seed(cfg.seed, &key.to_string()),
                ..cfg.clone()
            };
            fit_mixed_boost_on(&design, &z, &anchor_cfg)
        })
        .collect::<Result<Vec<_>>>()?;

    let anchor_records = anchors
        .keys()
        .iter()
        .zip(anchor_objs)
        .map(|(k, obj)| Anchor {
            subject_id: k.subject_id.clone(),
            visit: k.visit,
            response: obj.clone(),
        })
        .collect();
    Ok(AnchorFit {
        ensemble: AnchorEnsemble {
            version: ENSEMBLE_VERSION,
            metric_kind: dataset.metric_kind(),
            delta: anchors.delta(),
            feature_schema: dataset.feature_names().to_vec(),
            anchors: anchor_records,
            models,
        },
        training_keys,
        transformed,
    })
}

pub fn ensemble_to_json(ensemble: &AnchorEnsemble) -> String {
    serde_json::to_string(ensemble).expect("ensemble serializes")
}

pub fn ensemble_from_json(text: &str, path: &Path) -> Result<AnchorEnsemble> {
    #[derive(Deserialize)]
    struct Probe {
        version: u32,
    }
    let corrupt = |message: String| Error::Corrupt {
        path: path.to_path_buf(),
        message,
    };
    let probe: Probe = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    if probe.version != ENSEMBLE_VERSION {
        return Err(Error::VersionMismatch {
            expected: ENSEMBLE_VERSION,
            found: probe.version,
        });
    }
    let ensemble: AnchorEnsemble = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    ensemble.validate().map_err(corrupt)?;
    Ok(ensemble)
}

pub fn save_ensemble(ensemble: &AnchorEnsemble, path: &Path) -> Result<()> {
    fs::write(path, ensemble_to_json(ensemble)).map_err(|e| Error::io(path, e))
}

pub fn load_ensemble(path: &Path) -> Result<AnchorEnsemble> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ensemble_from_json(&text, path)
}
