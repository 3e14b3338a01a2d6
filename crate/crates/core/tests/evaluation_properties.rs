use std::collections::BTreeMap;

use proptest::prelude::*;

use metricre_core::anchor::{fit_anchor_models, select_anchors, AnchorPolicy};
use metricre_core::data::{Subject, Visit};
use metricre_core::eval::{
    evaluate, run_holdout, simulate_curves, split_within_subject, training_candidates, HoldoutConfig,
    IndividualError,
};
use metricre_core::predict::{predict_cached, predicted_profile};
use metricre_core::{
    CandidateSet, CovariateVector, Curve, FitConfig, LongitudinalDataset, MetricKind, PredictionMode,
    PredictionRequest, ResponseObject, SimulationSpec, SplitOrder, SubjectId, DEFAULT_DELTA,
};

fn curve_dataset(visits: &[usize], seed: u64) -> LongitudinalDataset {
    let grid = vec![0.0, 1.0, 2.0, 3.0];
    let mut state = seed;
    let mut next = move || {
        state = metricre_core::seeding::splitmix64(state);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let subjects = visits
        .iter()
        .enumerate()
        .map(|(i, &nv)| {
            let level = 4.0 * next() - 2.0;
            Subject {
                id: SubjectId::new(format!("id{i:02}")).unwrap(),
                visits: (0..nv as u32)
                    .map(|v| {
                        let x = next();
                        Visit {
                            visit: v,
                            covariates: CovariateVector::new(vec![x]).unwrap(),
                            response: ResponseObject::Curve(
                                Curve::new(grid.clone(), grid.iter().map(|t| level + x * t + 0.1 * next()).collect())
                                    .unwrap(),
                            ),
                        }
                    })
                    .collect(),
            }
        })
        .collect();
    LongitudinalDataset::new(vec!["x".into()], subjects).unwrap()
}

fn small_fit(ds: &LongitudinalDataset, seed: u64) -> (metricre_core::SplitPlan, metricre_core::AnchorEnsemble) {
    let split = split_within_subject(ds, 0.6, seed, SplitOrder::Random).unwrap();
    let anchors = select_anchors(&split.train, &AnchorPolicy::All, DEFAULT_DELTA).unwrap();
    let cfg = FitConfig {
        n_iterations: 8,
        min_obs_per_leaf: 1,
        max_depth: 2,
        seed,
        ..FitConfig::default()
    };
    let ensemble = fit_anchor_models(ds, &split, &anchors, &cfg).unwrap();
    (split, ensemble)
}

fn relabel(ds: &LongitudinalDataset, map: &BTreeMap<SubjectId, SubjectId>) -> LongitudinalDataset {
    let subjects = ds
        .subjects()
        .iter()
        .map(|s| Subject {
            id: map[&s.id].clone(),
            visits: s.visits.clone(),
        })
        .collect();
    LongitudinalDataset::new(ds.feature_names().to_vec(), subjects).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_plans_are_valid(
        visits in prop::collection::vec(1usize..9, 1..10),
        frac in 0.05..0.95f64,
        seed in any::<u64>(),
        chrono in any::<bool>(),
    ) {
        prop_assume!(visits.iter().sum::<usize>() >= 2);
        let ds = curve_dataset(&visits, seed);
        let order = if chrono { SplitOrder::Chronological } else { SplitOrder::Random };
        let split = split_within_subject(&ds, frac, seed, order).unwrap();
        prop_assert!(split.validate(&ds).is_ok());
        for s in ds.subjects() {
            let n = s.visits.len();
            let train = split.train.iter().filter(|k| k.subject_id == s.id).count();
            prop_assert!(train >= 1);
            prop_assert_eq!(train, ((frac * n as f64 - 1e-9).ceil() as usize).clamp(1, n));
        }
        prop_assert_eq!(split, split_within_subject(&ds, frac, seed, order).unwrap());
    }

    #[test]
    fn shifting_profile_and_candidates_keeps_choice(seed in 0u64..500, shift in -5.0..5.0f64) {
        let ds = curve_dataset(&[3, 4, 3], seed);
        let (split, ensemble) = small_fit(&ds, seed);
        let cands = CandidateSet::new(&ensemble, training_candidates(&ds, &split).unwrap()).unwrap();
        let x = CovariateVector::new(vec![(seed % 7) as f64 / 7.0]).unwrap();
        let profile = predicted_profile(&ensemble, &x, None, PredictionMode::WithoutRe).unwrap();
        let best = |offset: f64| {
            (0..cands.len())
                .map(|i| {
                    let s: f64 = cands
                        .transformed_row(i)
                        .iter()
                        .zip(&profile)
                        .map(|(t, p)| ((t + offset) - (p + offset)).powi(2))
                        .sum();
                    (s, i)
                })
                .fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a })
                .1
        };
        let got = predict_cached(&ensemble, &cands, &PredictionRequest::without_re(x)).unwrap();
        prop_assert_eq!(&cands.keys()[best(shift)], &got.chosen_key);
        prop_assert_eq!(best(0.0), best(shift));
    }

    #[test]
    fn score_is_nonnegative_and_zero_on_exact_profile(seed in 0u64..500) {
        let ds = curve_dataset(&[3, 3, 4], seed);
        let (split, ensemble) = small_fit(&ds, seed);
        let mut cands = training_candidates(&ds, &split).unwrap();
        let x = CovariateVector::new(vec![0.25]).unwrap();
        let req = PredictionRequest { record_scores: true, ..PredictionRequest::without_re(x.clone()) };
        let set = CandidateSet::new(&ensemble, cands.clone()).unwrap();
        let res = predict_cached(&ensemble, &set, &req).unwrap();
        prop_assert!(res.score >= 0.0);
        for (_, s) in res.per_candidate_scores.unwrap() {
            prop_assert!(s >= res.score);
        }
        let profile = predicted_profile(&ensemble, &x, None, PredictionMode::WithoutRe).unwrap();
        let exact = (0..set.len()).any(|i| set.transformed_row(i) == profile.as_slice());
        prop_assert_eq!(res.score == 0.0, exact);
        cands.truncate(1);
        let one = CandidateSet::new(&ensemble, cands).unwrap();
        prop_assert_eq!(&predict_cached(&ensemble, &one, &req).unwrap().chosen_key, &one.keys()[0]);
    }

    #[test]
    fn without_re_ignores_subject(seed in 0u64..500, name in "[a-z]{1,8}") {
        let ds = curve_dataset(&[3, 4], seed);
        let (split, ensemble) = small_fit(&ds, seed);
        let cands = CandidateSet::new(&ensemble, training_candidates(&ds, &split).unwrap()).unwrap();
        let x = CovariateVector::new(vec![0.6]).unwrap();
        let base = predict_cached(&ensemble, &cands, &PredictionRequest::without_re(x.clone())).unwrap();
        for subject in [SubjectId::new(name).unwrap(), SubjectId::new("id00").unwrap()] {
            let req = PredictionRequest { subject: Some(subject), ..PredictionRequest::without_re(x.clone()) };
            prop_assert_eq!(&predict_cached(&ensemble, &cands, &req).unwrap(), &base);
        }
    }

    #[test]
    fn without_re_evaluation_survives_relabeling(seed in 0u64..200) {
        let ds = curve_dataset(&[3, 4, 3, 5], seed);
        let (split, ensemble) = small_fit(&ds, seed);
        let cands = CandidateSet::new(&ensemble, training_candidates(&ds, &split).unwrap()).unwrap();
        let report = evaluate(&ds, &split, &ensemble, &cands).unwrap();

        // Reverse the id order so relabeling also permutes subject positions.
        let ids: Vec<SubjectId> = ds.subjects().iter().map(|s| s.id.clone()).collect();
        let map: BTreeMap<SubjectId, SubjectId> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), SubjectId::new(format!("zz{:02}", ids.len() - i)).unwrap()))
            .collect();
        let renamed = relabel(&ds, &map);
        let rename_keys = |set: &std::collections::BTreeSet<metricre_core::VisitKey>| {
            set.iter().map(|k| metricre_core::VisitKey::new(map[&k.subject_id].clone(), k.visit)).collect()
        };
        let split2 = metricre_core::SplitPlan { train: rename_keys(&split.train), test: rename_keys(&split.test) };
        // Candidates keep their original keys so tie-breaking is unchanged; only query ids move.
        let report2 = evaluate(&renamed, &split2, &ensemble, &cands).unwrap();

        let by_id = |rows: &[IndividualError]| -> BTreeMap<usize, f64> {
            rows.iter()
                .map(|r| {
                    let orig = map.iter().find(|(_, v)| **v == r.subject_id).map(|(k, _)| k).unwrap_or(&r.subject_id);
                    (ids.iter().position(|i| i == orig).unwrap(), r.mse_without_re)
                })
                .collect()
        };
        prop_assert_eq!(by_id(&report.per_individual), by_id(&report2.per_individual));
        // Relabeling reorders subjects, so the mean is summed in a different order.
        let (a, b) = (report.mean_mse_without_re.unwrap(), report2.mean_mse_without_re.unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

#[test]
fn subject_effects_help_on_strongly_clustered_curves() {
    let spec = SimulationSpec {
        metric_kind: MetricKind::Curve,
        n_subjects: 40,
        visits_per_subject: 8,
        sigma_b: 4.0,
        sigma_eps: 0.2,
        covariate_dim: 2,
        seed: 3,
        cloud_size: 100,
    };
    let sim = simulate_curves(&spec).unwrap();
    let cfg = HoldoutConfig {
        max_anchors: Some(15),
        fit: FitConfig {
            n_iterations: 60,
            ..FitConfig::default()
        },
        ..HoldoutConfig::default()
    };
    let report = run_holdout(&sim.dataset, &cfg, 3).unwrap().report;
    let (with, without) = (report.mean_mse_with_re.unwrap(), report.mean_mse_without_re.unwrap());
    assert!(with < without, "with {with} vs without {without}");
}
