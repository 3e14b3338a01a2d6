//! Subject-clustered covariates and metric-space responses.

mod io;
mod response;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_dataset, load_dataset_with, read_covariate_table, save_dataset, write_covariate_table,
    CovariateTable, DatasetFormat,
};
pub use response::{
    validate_laplacian, validate_laplacian_with, Curve, Laplacian, LaplacianCheck,
    LaplacianDiagnostics, LaplacianFailure, MetricKind, PointCloud, ResponseObject, Tolerances,
};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectId(String);

impl SubjectId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvalidDataset("empty subject id".into()));
        }
        Ok(SubjectId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Identifies one visit `(i, j)` of the index set.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VisitKey {
    pub subject_id: SubjectId,
    pub visit: u32,
}

impl VisitKey {
    pub fn new(subject_id: SubjectId, visit: u32) -> Self {
        VisitKey { subject_id, visit }
    }
}

impl fmt::Display for VisitKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.subject_id, self.visit)
    }
}

/// Fixed-effect covariates of one visit. Feature names live on the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CovariateVector(Vec<f64>);

impl CovariateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite covariate".into()));
        }
        Ok(CovariateVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Visit {
    pub visit: u32,
    pub covariates: CovariateVector,
    pub response: ResponseObject,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub id: SubjectId,
    pub visits: Vec<Visit>,
}

/// Validated longitudinal data set. Subjects are sorted by id, visits by index.
#[derive(Clone, Debug, PartialEq)]
pub struct LongitudinalDataset {
    feature_names: Vec<String>,
    metric_kind: MetricKind,
    subjects: Vec<Subject>,
    index: BTreeMap<VisitKey, (usize, usize)>,
}

impl LongitudinalDataset {
    pub fn new(feature_names: Vec<String>, mut subjects: Vec<Subject>) -> Result<Self> {
        subjects.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in subjects.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::InvalidDataset(format!(
                    "duplicate subject id {}",
                    pair[0].id
                )));
            }
        }
        let first = subjects
            .iter()
            .flat_map(|s| s.visits.first())
            .next()
            .ok_or_else(|| Error::InvalidDataset("dataset has no visits".into()))?;
        let metric_kind = first.response.kind();
        let reference = first.response.clone();
        let p = feature_names.len();

        let mut index = BTreeMap::new();
        for (si, subject) in subjects.iter_mut().enumerate() {
            if subject.visits.is_empty() {
                return Err(Error::InvalidDataset(format!(
                    "subject {} has no visits",
                    subject.id
                )));
            }
            subject.visits.sort_by_key(|v| v.visit);
            for (vi, visit) in subject.visits.iter().enumerate() {
                let key = VisitKey::new(subject.id.clone(), visit.visit);
                if visit.covariates.len() != p {
                    return Err(Error::InvalidResponse {
                        key,
                        message: format!(
                            "{} covariates, schema has {p}",
                            visit.covariates.len()
                        ),
                    });
                }
                if visit.response.kind() != metric_kind {
                    return Err(Error::MetricMismatch {
                        expected: metric_kind.to_string(),
                        found: format!("{} at {key}", visit.response.kind()),
                    });
                }
                if visit.response.shape_signature() != reference.shape_signature() {
                    return Err(Error::InvalidResponse {
                        key,
                        message: "response shape differs from the rest of the dataset".into(),
                    });
                }
                if index.insert(key.clone(), (si, vi)).is_some() {
                    return Err(Error::InvalidResponse {
                        key,
                        message: "duplicate visit index".into(),
                    });
                }
            }
        }
        if index.len() < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 visits, got {}",
                index.len()
            )));
        }
        Ok(LongitudinalDataset {
            feature_names,
            metric_kind,
            subjects,
            index,
        })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn metric_kind(&self) -> MetricKind {
        self.metric_kind
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_visits(&self) -> usize {
        self.index.len()
    }

    /// All keys in (subject, visit) order.
    pub fn keys(&self) -> impl Iterator<Item = &VisitKey> {
        self.index.keys()
    }

    pub fn contains(&self, key: &VisitKey) -> bool {
        self.index.contains_key(key)
    }

    pub fn visit(&self, key: &VisitKey) -> Option<&Visit> {
        self.index
            .get(key)
            .map(|&(s, v)| &self.subjects[s].visits[v])
    }

    pub fn try_visit(&self, key: &VisitKey) -> Result<&Visit> {
        self.visit(key).ok_or_else(|| Error::UnknownKey(key.clone()))
    }

    pub fn response(&self, key: &VisitKey) -> Result<&ResponseObject> {
        self.try_visit(key).map(|v| &v.response)
    }

    pub fn iter(&self) -> impl Iterator<Item = (VisitKey, &Visit)> {
        self.subjects.iter().flat_map(|s| {
            s.visits
                .iter()
                .map(move |v| (VisitKey::new(s.id.clone(), v.visit), v))
        })
    }
}

/// Disjoint train/test partition of a dataset's index set.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: BTreeSet<VisitKey>,
    pub test: BTreeSet<VisitKey>,
}

impl SplitPlan {
    pub fn validate(&self, dataset: &LongitudinalDataset) -> Result<()> {
        if let Some(k) = self.train.intersection(&self.test).next() {
            return Err(Error::InvalidDataset(format!(
                "visit {k} is in both train and test"
            )));
        }
        for key in self.train.iter().chain(&self.test) {
            if !dataset.contains(key) {
                return Err(Error::UnknownKey(key.clone()));
            }
        }
        if self.train.len() + self.test.len() != dataset.n_visits() {
            return Err(Error::InvalidDataset(
                "split does not cover every visit".into(),
            ));
        }
        for subject in dataset.subjects() {
            if subject.visits.len() >= 2
                && !subject
                    .visits
                    .iter()
                    .any(|v| self.train.contains(&VisitKey::new(subject.id.clone(), v.visit)))
            {
                return Err(Error::InvalidDataset(format!(
                    "subject {} has no training visit",
                    subject.id
                )));
            }
        }
        Ok(())
    }

    pub fn train_subjects(&self) -> BTreeSet<&SubjectId> {
        self.train.iter().map(|k| &k.subject_id).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(v: f64) -> ResponseObject {
        ResponseObject::Curve(Curve::new(vec![0.0, 1.0], vec![v, v]).unwrap())
    }

    fn visit(j: u32, v: f64) -> Visit {
        Visit {
            visit: j,
            covariates: CovariateVector::new(vec![v]).unwrap(),
            response: curve(v),
        }
    }

    fn subject(id: &str, visits: Vec<Visit>) -> Subject {
        Subject {
            id: SubjectId::new(id).unwrap(),
            visits,
        }
    }

    #[test]
    fn dataset_sorts_and_indexes() {
        let ds = LongitudinalDataset::new(
            vec!["x".into()],
            vec![
                subject("b", vec![visit(2, 1.0), visit(1, 0.0)]),
                subject("a", vec![visit(0, 3.0)]),
            ],
        )
        .unwrap();
        let keys: Vec<String> = ds.keys().map(|k| k.to_string()).collect();
        assert_eq!(keys, ["a#0", "b#1", "b#2"]);
        assert_eq!(ds.subjects()[1].visits[0].visit, 1);
        assert!(ds.visit(&VisitKey::new(SubjectId::new("a").unwrap(), 0)).is_some());
    }

    #[test]
    fn rejects_duplicate_visits_and_tiny_datasets() {
        let dup = LongitudinalDataset::new(
            vec!["x".into()],
            vec![subject("a", vec![visit(0, 1.0), visit(0, 2.0)])],
        );
        assert!(dup.is_err());
        let tiny = LongitudinalDataset::new(vec!["x".into()], vec![subject("a", vec![visit(0, 1.0)])]);
        assert!(tiny.is_err());
        assert!(SubjectId::new("").is_err());
    }

    #[test]
    fn rejects_mixed_kinds() {
        let mut v = visit(1, 0.0);
        v.response = ResponseObject::Laplacian(Laplacian::zeros(2));
        let err = LongitudinalDataset::new(vec!["x".into()], vec![subject("a", vec![visit(0, 1.0), v])])
            .unwrap_err();
        assert!(matches!(err, Error::MetricMismatch { .. }));
    }

    #[test]
    fn rejects_mismatched_grids() {
        let mut v = visit(1, 0.0);
        v.response = ResponseObject::Curve(Curve::new(vec![0.0, 2.0], vec![0.0, 0.0]).unwrap());
        assert!(LongitudinalDataset::new(vec!["x".into()], vec![subject("a", vec![visit(0, 1.0), v])]).is_err());
    }

    #[test]
    fn split_validation() {
        let ds = LongitudinalDataset::new(
            vec!["x".into()],
            vec![subject("a", vec![visit(0, 1.0), visit(1, 2.0)])],
        )
        .unwrap();
        let keys: Vec<VisitKey> = ds.keys().cloned().collect();
        let good = SplitPlan {
            train: [keys[0].clone()].into(),
            test: [keys[1].clone()].into(),
        };
        assert!(good.validate(&ds).is_ok());
        let no_train = SplitPlan {
            train: BTreeSet::new(),
            test: keys.iter().cloned().collect(),
        };
        assert!(no_train.validate(&ds).is_err());
        let incomplete = SplitPlan {
            train: [keys[0].clone()].into(),
            test: BTreeSet::new(),
        };
        assert!(incomplete.validate(&ds).is_err());
    }
}
