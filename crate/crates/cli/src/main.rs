//! `metricre`: simulate, fit, predict, evaluate and study anchor-based
//! random-effects regression for curves, distributions and graphs.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use config::{DataFormat, ModeChoice, Subset};
use metricre_core::MetricKind;

#[derive(Debug, Parser)]
#[command(name = "metricre", version, about = "Anchor-based random-effects regression for metric-space responses")]
pub struct Cli {
    /// Global seed; every random stream is derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to the number of CPUs). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON config with the same keys as the flags, in snake_case.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for all output files.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic longitudinal dataset.
    Simulate(SimulateFlags),
    /// Split a dataset within subjects and fit the anchor ensemble.
    Fit(FitFlags),
    /// Predict held-out visits with a fitted ensemble.
    Predict(PredictFlags),
    /// Held-out Fréchet MSE per individual, with and without random effects.
    Evaluate(EvaluateFlags),
    /// Empirical consistency study on simulated curves.
    Consistency(ConsistencyFlags),
    /// Pairwise squared distances.
    Distances {
        #[command(subcommand)]
        command: DistancesCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum DistancesCommand {
    /// Write the squared distance matrix as CSV.
    Export(ExportFlags),
}

#[derive(Debug, Args, Serialize)]
pub struct DataFlags {
    /// Dataset file: NDJSON, or a curve CSV together with --covariates.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Companion covariate CSV for curve CSV datasets.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariates: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateFlags {
    /// Response space: curve, point_cloud or laplacian.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricKind>,
    /// Number of simulated subjects.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_subjects: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visits_per_subject: Option<usize>,
    /// Standard deviation of the subject effect.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_b: Option<f64>,
    /// Visit-level noise scale.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_eps: Option<f64>,
    /// Number of covariates, each uniform on [0, 1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariate_dim: Option<usize>,
    /// Points per cloud (point_cloud only).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cloud_size: Option<usize>,
    /// Output format; csv is available for curves only.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<DataFormat>,
}

#[derive(Debug, Args, Serialize)]
pub struct BoostFlags {
    /// Boosting iterations per anchor model (default 200).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_iterations: Option<usize>,
    /// Shrinkage applied to every tree (default 0.05).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    /// Maximum tree depth (default 6).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    /// Maximum leaves per tree (default 31).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_leaves: Option<usize>,
    /// Minimum training rows in a leaf (default 5).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_obs_per_leaf: Option<usize>,
    /// Boosting iterations between variance-component updates.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_update_every: Option<usize>,
    /// Offset in ln(d^2 + delta).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Use a seeded random subset of this many training visits as anchors.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_anchors: Option<usize>,
    /// Share of each subject's visits used for training.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_fraction: Option<f64>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Args, Serialize)]
pub struct FitFlags {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pub boost: BoostFlags,
    /// Train on the earliest visits of each subject instead of a random subset.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub chronological: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictFlags {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataFlags,
    /// Ensemble written by `fit`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<PathBuf>,
    /// Split written by `fit`; test visits are predicted, training visits are candidates.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<PathBuf>,
    /// Prediction mode: with_re, without_re or both.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeChoice>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateFlags {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataFlags,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ConsistencyFlags {
    /// Comma-separated subject counts.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    /// Replicates per grid value.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visits_per_subject: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_b: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_eps: Option<f64>,
    /// Number of covariates, each uniform on [0, 1].
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub covariate_dim: Option<usize>,
    /// Query covariate vectors shared by all replicates.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_query_points: Option<usize>,
    /// Queried subjects per replicate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_query_subjects: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub boost: BoostFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportFlags {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataFlags,
    /// Split file, required for --subset train.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<PathBuf>,
    /// Rows and columns to export: all visits or training visits only.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subset: Option<Subset>,
}

fn error_line(err: &anyhow::Error) -> String {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<metricre_core::Error>())
        .map(|e| e.kind())
        .unwrap_or("error");
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string().replace('\n', " ");
        if !parts.last().is_some_and(|p| p.contains(&text)) {
            parts.push(text);
        }
    }
    let message = parts.join(": ");
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            eprintln!("{}", serde_json::json!({ "error": "usage", "message": first }));
            return ExitCode::from(1);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::from(1)
        }
    }
}
