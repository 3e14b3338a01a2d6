//! Selection of a predicted response among candidate objects.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchor::{transform_value, AnchorEnsemble, AnchorFit};
use crate::data::{CovariateVector, LongitudinalDataset, ResponseObject, SubjectId, VisitKey};
use crate::error::{Error, Result};
use crate::metrics::pairwise_between;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    WithRe,
    WithoutRe,
}

impl PredictionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PredictionMode::WithRe => "with_re",
            PredictionMode::WithoutRe => "without_re",
        }
    }
}

impl std::fmt::Display for PredictionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PredictionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with_re" | "with-re" => Ok(PredictionMode::WithRe),
            "without_re" | "without-re" => Ok(PredictionMode::WithoutRe),
            other => Err(Error::InvalidConfig(format!("unknown prediction mode '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRequest {
    pub x: CovariateVector,
    pub subject: Option<SubjectId>,
    pub mode: PredictionMode,
    pub record_scores: bool,
}

impl PredictionRequest {
    pub fn without_re(x: CovariateVector) -> Self {
        PredictionRequest {
            x,
            subject: None,
            mode: PredictionMode::WithoutRe,
            record_scores: false,
        }
    }

    pub fn with_re(x: CovariateVector, subject: SubjectId) -> Self {
        PredictionRequest {
            x,
            subject: Some(subject),
            mode: PredictionMode::WithRe,
            record_scores: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionResult {
    pub chosen_key: VisitKey,
    pub chosen_object: ResponseObject,
    pub score: f64,
    pub per_candidate_scores: Option<Vec<(VisitKey, f64)>>,
}

/// Predicted transformed distance to every anchor, in anchor order.
///
/// Subjects absent from training get a zero intercept.
pub fn predicted_profile(
    ensemble: &AnchorEnsemble,
    x: &CovariateVector,
    subject: Option<&SubjectId>,
    mode: PredictionMode,
) -> Result<Vec<f64>> {
    let subject = match (mode, subject) {
        (PredictionMode::WithRe, None) => {
            return Err(Error::InvalidConfig("with_re prediction needs a subject id".into()))
        }
        (PredictionMode::WithRe, Some(s)) => Some(s),
        (PredictionMode::WithoutRe, _) => None,
    };
    if x.len() != ensemble.feature_schema.len() {
        return Err(Error::SchemaMismatch {
            expected: ensemble.feature_schema.len(),
            got: x.len(),
        });
    }
    Ok(ensemble
        .models
        .iter()
        .map(|m| {
            let f = m.predict_fixed_raw(x.values());
            match subject {
                Some(s) => f + m.intercept(s),
                None => f,
            }
        })
        .collect())
}

/// Candidate objects with their transformed distances to the ensemble's anchors.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    keys: Vec<VisitKey>,
    objects: Vec<ResponseObject>,
    n_anchors: usize,
    transformed: Vec<f64>,
}

impl CandidateSet {
    pub fn new(ensemble: &AnchorEnsemble, mut candidates: Vec<(VisitKey, ResponseObject)>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        candidates.sort_by(|a, b| a.0.cmp(&b.0));
        if let Some(w) = candidates.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidConfig(format!("duplicate candidate {}", w[0].0)));
        }
        if let Some((k, o)) = candidates.iter().find(|(_, o)| o.kind() != ensemble.metric_kind) {
            return Err(Error::MetricMismatch {
                expected: ensemble.metric_kind.to_string(),
                found: format!("{} (candidate {k})", o.kind()),
            });
        }
        let (keys, objects): (Vec<_>, Vec<_>) = candidates.into_iter().unzip();
        let cand_refs: Vec<&ResponseObject> = objects.iter().collect();
        let anchor_refs: Vec<&ResponseObject> = ensemble.anchors.iter().map(|a| &a.response).collect();
        let d2 = pairwise_between(&cand_refs, &anchor_refs)?;
        let transformed = d2.iter().map(|&v| transform_value(v, ensemble.delta)).collect();
        Ok(CandidateSet {
            keys,
            objects,
            n_anchors: anchor_refs.len(),
            transformed,
        })
    }

    /// Training visits as candidates, reusing the distances computed during fitting.
    pub fn from_fit(fit: &AnchorFit, dataset: &LongitudinalDataset) -> Result<Self> {
        let objects = fit
            .training_keys
            .iter()
            .map(|k| dataset.response(k).cloned())
            .collect::<Result<Vec<_>>>()?;
        if objects.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        Ok(CandidateSet {
            keys: fit.training_keys.clone(),
            objects,
            n_anchors: fit.ensemble.len(),
            transformed: fit.transformed.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[VisitKey] {
        &self.keys
    }

    pub fn object(&self, i: usize) -> &ResponseObject {
        &self.objects[i]
    }

    pub fn transformed_row(&self, i: usize) -> &[f64] {
        &self.transformed[i * self.n_anchors..(i + 1) * self.n_anchors]
    }

    fn check(&self, ensemble: &AnchorEnsemble) -> Result<()> {
        if self.n_anchors != ensemble.len() {
            return Err(Error::ShapeMismatch(format!(
                "candidate set built for {} anchors, ensemble has {}",
                self.n_anchors,
                ensemble.len()
            )));
        }
        Ok(())
    }
}

fn score(row: &[f64], profile: &[f64]) -> f64 {
    row.iter().zip(profile).map(|(t, p)| (t - p) * (t - p)).sum()
}

/// Predicts against precomputed candidate distances.
pub fn predict_cached(
    ensemble: &AnchorEnsemble,
    candidates: &CandidateSet,
    request: &PredictionRequest,
) -> Result<PredictionResult> {
    candidates.check(ensemble)?;
    let profile = predicted_profile(ensemble, &request.x, request.subject.as_ref(), request.mode)?;
    let scores: Vec<f64> = (0..candidates.len())
        .map(|i| score(candidates.transformed_row(i), &profile))
        .collect();
    // Keys are sorted, so keeping the first minimum breaks ties by smallest key.
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok(PredictionResult {
        chosen_key: candidates.keys[best].clone(),
        chosen_object: candidates.objects[best].clone(),
        score: scores[best],
        per_candidate_scores: request
            .record_scores
            .then(|| candidates.keys.iter().cloned().zip(scores).collect()),
    })
}

/// Predicts the response for one request among `candidates`.
pub fn predict_object(
    ensemble: &AnchorEnsemble,
    candidates: Vec<(VisitKey, ResponseObject)>,
    request: &PredictionRequest,
) -> Result<PredictionResult> {
    let set = CandidateSet::new(ensemble, candidates)?;
    predict_cached(ensemble, &set, request)
}

/// Runs many requests in parallel; output order matches `requests`.
pub fn batch_predict(
    ensemble: &AnchorEnsemble,
    candidates: &CandidateSet,
    requests: &[PredictionRequest],
) -> Result<Vec<PredictionResult>> {
    requests
        .par_iter()
        .map(|r| predict_cached(ensemble, candidates, r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchor::{Anchor, ENSEMBLE_VERSION};
    use crate::boost::{FitConfig, MixedBoostModel, RegressionTree, VarianceComponents};
    use crate::data::{Curve, MetricKind};
    use std::collections::BTreeMap;

    fn key(s: &str, v: u32) -> VisitKey {
        VisitKey::new(SubjectId::new(s).unwrap(), v)
    }

    fn flat(level: f64) -> ResponseObject {
        ResponseObject::Curve(Curve::new(vec![0.0, 1.0], vec![level, level]).unwrap())
    }

    fn constant_model(value: f64, intercepts: &[(&str, f64)]) -> MixedBoostModel {
        MixedBoostModel {
            base_value: value,
            learning_rate: 0.05,
            trees: vec![RegressionTree::leaf(0.0, 1)],
            intercepts: intercepts
                .iter()
                .map(|(s, b)| (SubjectId::new(*s).unwrap(), *b))
                .collect::<BTreeMap<_, _>>(),
            variance: VarianceComponents::new(1.0, 1.0),
            feature_schema: vec!["x".into()],
            config: FitConfig::default(),
            training_loss: vec![],
        }
    }

    fn ensemble(profile: &[f64], intercepts: &[(&str, f64)]) -> AnchorEnsemble {
        AnchorEnsemble {
            version: ENSEMBLE_VERSION,
            metric_kind: MetricKind::Curve,
            delta: 1e-8,
            feature_schema: vec!["x".into()],
            anchors: (0..profile.len())
                .map(|i| Anchor {
                    subject_id: SubjectId::new("a").unwrap(),
                    visit: i as u32,
                    response: flat(i as f64),
                })
                .collect(),
            models: profile.iter().map(|p| constant_model(*p, intercepts)).collect(),
        }
    }

    fn x() -> CovariateVector {
        CovariateVector::new(vec![0.5]).unwrap()
    }

    #[test]
    fn picks_nearest_profile() {
        // Anchors at levels 0 and 1; profile says "distance^2 1 to the first, 0 to the second".
        let ens = ensemble(&[(1.0f64 + 1e-8).ln(), (1e-8f64).ln()], &[]);
        let cands = vec![(key("c", 0), flat(0.0)), (key("c", 1), flat(1.0)), (key("c", 2), flat(5.0))];
        let res = predict_object(&ens, cands, &PredictionRequest::without_re(x())).unwrap();
        assert_eq!(res.chosen_key, key("c", 1));
        assert!(res.score < 1e-12);
    }

    #[test]
    fn ties_go_to_smallest_key() {
        let ens = ensemble(&[0.0], &[]);
        let cands = vec![(key("b", 0), flat(3.0)), (key("a", 7), flat(3.0))];
        let mut req = PredictionRequest::without_re(x());
        req.record_scores = true;
        let res = predict_object(&ens, cands, &req).unwrap();
        assert_eq!(res.chosen_key, key("a", 7));
        let scores = res.per_candidate_scores.unwrap();
        assert_eq!(scores[0].1, scores[1].1);
    }

    #[test]
    fn intercept_shifts_choice() {
        let ens = ensemble(&[(1.0f64).ln()], &[("s", (16.0f64).ln())]);
        let cands = vec![(key("c", 0), flat(1.0)), (key("c", 1), flat(4.0))];
        let fixed = predict_object(&ens, cands.clone(), &PredictionRequest::without_re(x())).unwrap();
        assert_eq!(fixed.chosen_key, key("c", 0));
        let sid = SubjectId::new("s").unwrap();
        let pers = predict_object(&ens, cands.clone(), &PredictionRequest::with_re(x(), sid)).unwrap();
        assert_eq!(pers.chosen_key, key("c", 1));
        // Unknown subject: same as without random effects.
        let other = SubjectId::new("zz").unwrap();
        let unk = predict_object(&ens, cands, &PredictionRequest::with_re(x(), other)).unwrap();
        assert_eq!(unk.chosen_key, fixed.chosen_key);
    }

    #[test]
    fn request_errors() {
        let ens = ensemble(&[0.0], &[]);
        let cands = vec![(key("c", 0), flat(1.0))];
        let mut req = PredictionRequest::without_re(x());
        req.mode = PredictionMode::WithRe;
        assert!(predict_object(&ens, cands.clone(), &req).is_err());
        assert!(matches!(
            predict_object(&ens, vec![], &PredictionRequest::without_re(x())),
            Err(Error::EmptyCandidates)
        ));
        let wide = PredictionRequest::without_re(CovariateVector::new(vec![0.0, 1.0]).unwrap());
        assert!(matches!(predict_object(&ens, cands.clone(), &wide), Err(Error::SchemaMismatch { .. })));
        let dup = vec![(key("c", 0), flat(1.0)), (key("c", 0), flat(2.0))];
        assert!(predict_object(&ens, dup, &PredictionRequest::without_re(x())).is_err());
    }

    #[test]
    fn batch_matches_single() {
        let ens = ensemble(&[0.3, -1.0], &[("s", 2.0)]);
        let cands = vec![(key("c", 0), flat(0.5)), (key("c", 1), flat(1.5)), (key("c", 2), flat(-2.0))];
        let set = CandidateSet::new(&ens, cands).unwrap();
        let reqs: Vec<_> = (0..10)
            .map(|i| {
                let xi = CovariateVector::new(vec![i as f64]).unwrap();
                if i % 2 == 0 {
                    PredictionRequest::without_re(xi)
                } else {
                    PredictionRequest::with_re(xi, SubjectId::new("s").unwrap())
                }
            })
            .collect();
        let batch = batch_predict(&ens, &set, &reqs).unwrap();
        for (r, b) in reqs.iter().zip(&batch) {
            assert_eq!(&predict_cached(&ens, &set, r).unwrap(), b);
        }
    }

    #[test]
    fn mode_strings() {
        for m in [PredictionMode::WithRe, PredictionMode::WithoutRe] {
            assert_eq!(m.as_str().parse::<PredictionMode>().unwrap(), m);
        }
    }
}
