//! Within-subject splits, held-out error, simulators and reports.

mod consistency;
mod report;
mod simulate;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::anchor::{
    fit_anchor_models_detailed, select_anchors, AnchorEnsemble, AnchorFit, AnchorPolicy, DEFAULT_DELTA,
};
use crate::boost::FitConfig;
use crate::data::{LongitudinalDataset, ResponseObject, SplitPlan, SubjectId, VisitKey};
use crate::error::{Error, Result};
use crate::metrics::squared_distance;
use crate::predict::{batch_predict, CandidateSet, PredictionRequest};
use crate::seeding;

pub use consistency::{consistency_study, ConsistencyConfig, ConsistencyRow, ConsistencyTable};
pub use report::{emit_consistency, emit_report, render_scatter_svg};
pub use simulate::{
    simulate, simulate_curves, simulate_distributions, simulate_graphs, OracleTarget, SimulatedDataset,
    SimulationSpec, CURVE_GRID_POINTS,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitOrder {
    #[default]
    Random,
    Chronological,
}

/// Number of training visits for a subject with `n` visits.
pub fn train_count(n: usize, fraction: f64) -> usize {
    if n <= 1 {
        return n;
    }
    ((fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// Per subject, the first ceil(fraction * n) visits of a seeded permutation (or of
/// visit order) go to training, the rest to test.
pub fn split_within_subject(
    dataset: &LongitudinalDataset,
    train_fraction: f64,
    seed: u64,
    order: SplitOrder,
) -> Result<SplitPlan> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut plan = SplitPlan::default();
    for subject in dataset.subjects() {
        let mut visits: Vec<u32> = subject.visits.iter().map(|v| v.visit).collect();
        if order == SplitOrder::Random {
            let mut rng = seeding::derived_rng(seed, subject.id.as_str());
            visits.shuffle(&mut rng);
        }
        let n_train = train_count(visits.len(), train_fraction);
        for (j, v) in visits.into_iter().enumerate() {
            let key = VisitKey::new(subject.id.clone(), v);
            if j < n_train {
                plan.train.insert(key);
            } else {
                plan.test.insert(key);
            }
        }
    }
    Ok(plan)
}

/// Training visits of `split` as prediction candidates.
pub fn training_candidates(
    dataset: &LongitudinalDataset,
    split: &SplitPlan,
) -> Result<Vec<(VisitKey, ResponseObject)>> {
    split
        .train
        .iter()
        .map(|k| Ok((k.clone(), dataset.response(k)?.clone())))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndividualError {
    pub subject_id: SubjectId,
    pub n_test: usize,
    pub mse_with_re: f64,
    pub mse_without_re: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub per_individual: Vec<IndividualError>,
    pub mean_mse_with_re: Option<f64>,
    pub mean_mse_without_re: Option<f64>,
    pub fraction_below_diagonal: Option<f64>,
}

impl EvaluationReport {
    /// Builds the aggregate fields from the per-individual rows.
    pub fn from_rows(per_individual: Vec<IndividualError>) -> Self {
        if per_individual.is_empty() {
            return EvaluationReport::default();
        }
        let n = per_individual.len() as f64;
        let with = per_individual.iter().map(|r| r.mse_with_re).sum::<f64>() / n;
        let without = per_individual.iter().map(|r| r.mse_without_re).sum::<f64>() / n;
        let below = per_individual
            .iter()
            .filter(|r| r.mse_with_re < r.mse_without_re)
            .count() as f64
            / n;
        EvaluationReport {
            per_individual,
            mean_mse_with_re: Some(with),
            mean_mse_without_re: Some(without),
            fraction_below_diagonal: Some(below),
        }
    }

    /// (without - with) / without, when defined.
    pub fn relative_reduction(&self) -> Option<f64> {
        match (self.mean_mse_with_re, self.mean_mse_without_re) {
            (Some(w), Some(wo)) if wo > 0.0 => Some((wo - w) / wo),
            _ => None,
        }
    }
}

/// Held-out Fréchet MSE per subject under both prediction modes.
pub fn evaluate(
    dataset: &LongitudinalDataset,
    split: &SplitPlan,
    ensemble: &AnchorEnsemble,
    candidates: &CandidateSet,
) -> Result<EvaluationReport> {
    if ensemble.metric_kind != dataset.metric_kind() {
        return Err(Error::MetricMismatch {
            expected: ensemble.metric_kind.to_string(),
            found: dataset.metric_kind().to_string(),
        });
    }
    let test: Vec<&VisitKey> = split.test.iter().collect();
    let mut requests = Vec::with_capacity(2 * test.len());
    for key in &test {
        let x = dataset.try_visit(key)?.covariates.clone();
        requests.push(PredictionRequest::with_re(x.clone(), key.subject_id.clone()));
        requests.push(PredictionRequest::without_re(x));
    }
    let results = batch_predict(ensemble, candidates, &requests)?;

    let mut sums: BTreeMap<&SubjectId, (usize, f64, f64)> = BTreeMap::new();
    for (i, key) in test.iter().enumerate() {
        let truth = dataset.response(key)?;
        let with = squared_distance(&results[2 * i].chosen_object, truth)?;
        let without = squared_distance(&results[2 * i + 1].chosen_object, truth)?;
        let entry = sums.entry(&key.subject_id).or_insert((0, 0.0, 0.0));
        entry.0 += 1;
        entry.1 += with;
        entry.2 += without;
    }
    let rows = sums
        .into_iter()
        .map(|(s, (n, w, wo))| IndividualError {
            subject_id: s.clone(),
            n_test: n,
            mse_with_re: w / n as f64,
            mse_without_re: wo / n as f64,
        })
        .collect();
    Ok(EvaluationReport::from_rows(rows))
}

/// Everything needed to go from a dataset to a held-out report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoldoutConfig {
    pub train_fraction: f64,
    pub split_order: SplitOrder,
    /// `None` uses every training visit as an anchor.
    pub max_anchors: Option<usize>,
    pub delta: f64,
    pub fit: FitConfig,
}

impl Default for HoldoutConfig {
    fn default() -> Self {
        HoldoutConfig {
            train_fraction: 0.6,
            split_order: SplitOrder::Random,
            max_anchors: None,
            delta: DEFAULT_DELTA,
            fit: FitConfig::default(),
        }
    }
}

impl HoldoutConfig {
    pub fn anchor_policy(&self, n_train: usize, seed: u64) -> AnchorPolicy {
        match self.max_anchors {
            Some(k) if k < n_train => AnchorPolicy::Subsample {
                k,
                seed: seeding::derive_seed(seed, "anchor-policy"),
            },
            _ => AnchorPolicy::All,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HoldoutRun {
    pub split: SplitPlan,
    pub ensemble: AnchorEnsemble,
    pub report: EvaluationReport,
}

/// Splits `dataset` and fits the anchor ensemble on the training part.
///
/// The split, anchor draw and model seeds are all derived from `seed`.
pub fn fit_holdout(dataset: &LongitudinalDataset, cfg: &HoldoutConfig, seed: u64) -> Result<(SplitPlan, AnchorFit)> {
    let split = split_within_subject(dataset, cfg.train_fraction, seeding::derive_seed(seed, "split"), cfg.split_order)?;
    let policy = cfg.anchor_policy(split.train.len(), seed);
    let anchors = select_anchors(&split.train, &policy, cfg.delta)?;
    let fit_cfg = FitConfig {
        seed: seeding::derive_seed(seed, "fit"),
        ..cfg.fit.clone()
    };
    let fit = fit_anchor_models_detailed(dataset, &split, &anchors, &fit_cfg)?;
    Ok((split, fit))
}

/// Split, fit on training visits, evaluate on test visits with training candidates.
pub fn run_holdout(dataset: &LongitudinalDataset, cfg: &HoldoutConfig, seed: u64) -> Result<HoldoutRun> {
    let (split, fit) = fit_holdout(dataset, cfg, seed)?;
    let candidates = CandidateSet::from_fit(&fit, dataset)?;
    let report = evaluate(dataset, &split, &fit.ensemble, &candidates)?;
    Ok(HoldoutRun {
        split,
        ensemble: fit.ensemble,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CovariateVector, Curve, MetricKind, Subject, Visit};

    fn dataset(sizes: &[u32]) -> LongitudinalDataset {
        let subjects = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| Subject {
                id: SubjectId::new(format!("s{i}")).unwrap(),
                visits: (0..n)
                    .map(|v| Visit {
                        visit: v,
                        covariates: CovariateVector::new(vec![v as f64]).unwrap(),
                        response: ResponseObject::Curve(
                            Curve::new(vec![0.0, 1.0], vec![i as f64, v as f64]).unwrap(),
                        ),
                    })
                    .collect(),
            })
            .collect();
        LongitudinalDataset::new(vec!["x".into()], subjects).unwrap()
    }

    fn counts(plan: &SplitPlan, subject: &str) -> (usize, usize) {
        let s = SubjectId::new(subject).unwrap();
        (
            plan.train.iter().filter(|k| k.subject_id == s).count(),
            plan.test.iter().filter(|k| k.subject_id == s).count(),
        )
    }

    #[test]
    fn ceiling_rule_examples() {
        let ds = dataset(&[10, 5, 1]);
        let plan = split_within_subject(&ds, 0.6, 3, SplitOrder::Random).unwrap();
        assert_eq!(counts(&plan, "s0"), (6, 4));
        assert_eq!(counts(&plan, "s1"), (3, 2));
        assert_eq!(counts(&plan, "s2"), (1, 0));
        plan.validate(&ds).unwrap();
        assert!(split_within_subject(&ds, 1.0, 3, SplitOrder::Random).is_err());
        assert!(split_within_subject(&ds, 0.0, 3, SplitOrder::Random).is_err());
    }

    #[test]
    fn chronological_split_takes_earliest_visits() {
        let ds = dataset(&[5]);
        let plan = split_within_subject(&ds, 0.6, 0, SplitOrder::Chronological).unwrap();
        let train: Vec<u32> = plan.train.iter().map(|k| k.visit).collect();
        assert_eq!(train, vec![0, 1, 2]);
    }

    #[test]
    fn random_split_is_seeded() {
        let ds = dataset(&[10, 10, 10]);
        let a = split_within_subject(&ds, 0.6, 11, SplitOrder::Random).unwrap();
        let b = split_within_subject(&ds, 0.6, 11, SplitOrder::Random).unwrap();
        assert_eq!(a, b);
        let c = split_within_subject(&ds, 0.6, 12, SplitOrder::Random).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn aggregate_is_unweighted_mean() {
        let row = |s: &str, n, w, wo| IndividualError {
            subject_id: SubjectId::new(s).unwrap(),
            n_test: n,
            mse_with_re: w,
            mse_without_re: wo,
        };
        let rep = EvaluationReport::from_rows(vec![row("a", 1, 1.0, 2.0), row("b", 5, 3.0, 2.0)]);
        assert_eq!(rep.mean_mse_with_re, Some(2.0));
        assert_eq!(rep.mean_mse_without_re, Some(2.0));
        assert_eq!(rep.fraction_below_diagonal, Some(0.5));
        let empty = EvaluationReport::from_rows(vec![]);
        assert_eq!(empty.mean_mse_with_re, None);
    }

    #[test]
    fn holdout_runs_end_to_end() {
        let sim = simulate_curves(&SimulationSpec {
            metric_kind: MetricKind::Curve,
            n_subjects: 6,
            visits_per_subject: 5,
            sigma_b: 1.0,
            sigma_eps: 0.1,
            covariate_dim: 2,
            seed: 4,
            cloud_size: 100,
        })
        .unwrap();
        let cfg = HoldoutConfig {
            max_anchors: Some(5),
            fit: FitConfig {
                n_iterations: 5,
                min_obs_per_leaf: 2,
                ..FitConfig::default()
            },
            ..HoldoutConfig::default()
        };
        let run = run_holdout(&sim.dataset, &cfg, 1).unwrap();
        assert_eq!(run.report.per_individual.len(), 6);
        assert!(run.report.per_individual.iter().all(|r| r.n_test == 2));
        assert_eq!(run.ensemble.len(), 5);
    }
}
