//! Resolution of settings from flags, an optional JSON file and defaults.
//!
//! Flags and file keys share one schema: `--n-iterations` is `n_iterations`.
//! A flag that was given wins over the file, which wins over the default.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use metricre_core::anchor::DEFAULT_DELTA;
use metricre_core::eval::{ConsistencyConfig, HoldoutConfig, SimulationSpec, SplitOrder};
use metricre_core::{FitConfig, MetricKind, PredictionMode};

#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    values: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: Value =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let Value::Object(values) = value else {
            bail!("config {} must hold a JSON object", path.display());
        };
        let known = known_keys();
        if let Some(k) = values.keys().find(|k| !known.contains(k.as_str())) {
            bail!("unknown config key '{k}' in {}", path.display());
        }
        Ok(ConfigFile { values })
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.values.get(key)
    }
}

fn keys_of<T: Serialize + Default>() -> Vec<String> {
    match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

fn known_keys() -> BTreeSet<String> {
    let mut keys: BTreeSet<String> = ["seed", "threads", "out_dir"].iter().map(|s| s.to_string()).collect();
    keys.extend(keys_of::<SimulateSettings>());
    keys.extend(keys_of::<FitSettings>());
    keys.extend(keys_of::<PredictSettings>());
    keys.extend(keys_of::<EvaluateSettings>());
    keys.extend(keys_of::<ConsistencySettings>());
    keys.extend(keys_of::<ExportSettings>());
    keys
}

/// Overlays file values and then given flags on the defaults of `T`.
pub fn resolve<T, F>(flags: &F, file: &ConfigFile) -> Result<T>
where
    T: Serialize + DeserializeOwned + Default,
    F: Serialize,
{
    let Value::Object(mut merged) = serde_json::to_value(T::default())? else {
        bail!("settings must serialize to an object");
    };
    let keys: Vec<String> = merged.keys().cloned().collect();
    for k in &keys {
        if let Some(v) = file.get(k) {
            merged.insert(k.clone(), v.clone());
        }
    }
    if let Value::Object(given) = serde_json::to_value(flags)? {
        for (k, v) in given {
            if !v.is_null() && merged.contains_key(&k) {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).context("invalid settings")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GlobalSettings {
    pub seed: u64,
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
}

impl Default for GlobalSettings {
    fn default() -> Self {
        GlobalSettings {
            seed: 0,
            threads: None,
            out_dir: PathBuf::from("."),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum DataFormat {
    #[default]
    Ndjson,
    Csv,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateSettings {
    pub metric: MetricKind,
    pub n_subjects: usize,
    pub visits_per_subject: usize,
    pub sigma_b: f64,
    pub sigma_eps: f64,
    pub covariate_dim: usize,
    pub cloud_size: usize,
    pub format: DataFormat,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        let spec = SimulationSpec::default();
        SimulateSettings {
            metric: spec.metric_kind,
            n_subjects: spec.n_subjects,
            visits_per_subject: spec.visits_per_subject,
            sigma_b: spec.sigma_b,
            sigma_eps: spec.sigma_eps,
            covariate_dim: spec.covariate_dim,
            cloud_size: spec.cloud_size,
            format: DataFormat::Ndjson,
        }
    }
}

impl SimulateSettings {
    pub fn spec(&self, seed: u64) -> SimulationSpec {
        SimulationSpec {
            metric_kind: self.metric,
            n_subjects: self.n_subjects,
            visits_per_subject: self.visits_per_subject,
            sigma_b: self.sigma_b,
            sigma_eps: self.sigma_eps,
            covariate_dim: self.covariate_dim,
            seed,
            cloud_size: self.cloud_size,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    pub data: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub n_iterations: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub max_leaves: usize,
    pub min_obs_per_leaf: usize,
    pub variance_update_every: usize,
    pub delta: f64,
    pub max_anchors: Option<usize>,
    pub train_fraction: f64,
    pub chronological: bool,
}

impl Default for FitSettings {
    fn default() -> Self {
        let fit = FitConfig::default();
        FitSettings {
            data: None,
            covariates: None,
            n_iterations: fit.n_iterations,
            learning_rate: fit.learning_rate,
            max_depth: fit.max_depth,
            max_leaves: fit.max_leaves,
            min_obs_per_leaf: fit.min_obs_per_leaf,
            variance_update_every: fit.variance_update_every,
            delta: DEFAULT_DELTA,
            max_anchors: None,
            train_fraction: 0.6,
            chronological: false,
        }
    }
}

impl FitSettings {
    pub fn holdout(&self) -> HoldoutConfig {
        HoldoutConfig {
            train_fraction: self.train_fraction,
            split_order: if self.chronological {
                SplitOrder::Chronological
            } else {
                SplitOrder::Random
            },
            max_anchors: self.max_anchors,
            delta: self.delta,
            fit: FitConfig {
                n_iterations: self.n_iterations,
                learning_rate: self.learning_rate,
                max_depth: self.max_depth,
                max_leaves: self.max_leaves,
                min_obs_per_leaf: self.min_obs_per_leaf,
                variance_update_every: self.variance_update_every,
                seed: 0,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModeChoice {
    WithRe,
    WithoutRe,
    #[default]
    Both,
}

impl ModeChoice {
    pub fn modes(self) -> Vec<PredictionMode> {
        match self {
            ModeChoice::WithRe => vec![PredictionMode::WithRe],
            ModeChoice::WithoutRe => vec![PredictionMode::WithoutRe],
            ModeChoice::Both => vec![PredictionMode::WithRe, PredictionMode::WithoutRe],
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictSettings {
    pub data: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub ensemble: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub mode: ModeChoice,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateSettings {
    pub data: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub ensemble: Option<PathBuf>,
    pub split: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsistencySettings {
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub visits_per_subject: usize,
    pub sigma_b: f64,
    pub sigma_eps: f64,
    pub covariate_dim: usize,
    pub n_query_points: usize,
    pub n_query_subjects: usize,
    pub n_iterations: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub max_leaves: usize,
    pub min_obs_per_leaf: usize,
    pub variance_update_every: usize,
    pub delta: f64,
    pub max_anchors: Option<usize>,
    pub train_fraction: f64,
}

impl Default for ConsistencySettings {
    fn default() -> Self {
        let c = ConsistencyConfig::default();
        let f = &c.holdout.fit;
        ConsistencySettings {
            n_grid: c.n_grid.clone(),
            replicates: c.replicates,
            visits_per_subject: c.spec.visits_per_subject,
            sigma_b: c.spec.sigma_b,
            sigma_eps: c.spec.sigma_eps,
            covariate_dim: c.spec.covariate_dim,
            n_query_points: c.n_query_points,
            n_query_subjects: c.n_query_subjects,
            n_iterations: f.n_iterations,
            learning_rate: f.learning_rate,
            max_depth: f.max_depth,
            max_leaves: f.max_leaves,
            min_obs_per_leaf: f.min_obs_per_leaf,
            variance_update_every: f.variance_update_every,
            delta: c.holdout.delta,
            max_anchors: c.holdout.max_anchors,
            train_fraction: c.holdout.train_fraction,
        }
    }
}

impl ConsistencySettings {
    pub fn study(&self, seed: u64) -> ConsistencyConfig {
        let base = ConsistencyConfig::default();
        ConsistencyConfig {
            spec: SimulationSpec {
                visits_per_subject: self.visits_per_subject,
                sigma_b: self.sigma_b,
                sigma_eps: self.sigma_eps,
                covariate_dim: self.covariate_dim,
                ..base.spec.clone()
            },
            n_grid: self.n_grid.clone(),
            replicates: self.replicates,
            holdout: HoldoutConfig {
                train_fraction: self.train_fraction,
                split_order: SplitOrder::Random,
                max_anchors: self.max_anchors,
                delta: self.delta,
                fit: FitConfig {
                    n_iterations: self.n_iterations,
                    learning_rate: self.learning_rate,
                    max_depth: self.max_depth,
                    max_leaves: self.max_leaves,
                    min_obs_per_leaf: self.min_obs_per_leaf,
                    variance_update_every: self.variance_update_every,
                    seed: 0,
                },
            },
            n_query_points: self.n_query_points,
            n_query_subjects: self.n_query_subjects,
            seed,
            ..base
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Subset {
    #[default]
    All,
    Train,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExportSettings {
    pub data: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub subset: Subset,
}
