use std::fs;
use std::path::Path;

use proptest::prelude::*;

use metricre_core::data::{load_dataset, save_dataset, DatasetFormat, Subject, Visit};
use metricre_core::{
    CovariateVector, Curve, Error, Laplacian, LongitudinalDataset, MetricKind, PointCloud, ResponseObject,
    SubjectId,
};

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn two_subject_curve_csv_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let curves = write(
        dir.path(),
        "curves.csv",
        "subject_id,visit,t_0,t_12,t_24\na,0,1,2,3\na,1,1.5,2.5,3.5\nb,0,-1,0,1\nb,1,0,0,0\n",
    );
    let cov = write(dir.path(), "cov.csv", "subject_id,visit,age\na,0,30\na,1,31\nb,0,50\nb,1,51\n");
    let format = DatasetFormat::CurveCsv { covariates: cov };
    let ds = load_dataset(&curves, &format).unwrap();
    assert_eq!(ds.n_subjects(), 2);
    assert_eq!(ds.n_visits(), 4);
    assert_eq!(ds.metric_kind(), MetricKind::Curve);
    assert_eq!(ds.feature_names(), ["age"]);

    let (out, out_cov) = (dir.path().join("out.csv"), dir.path().join("out_cov.csv"));
    let out_format = DatasetFormat::CurveCsv { covariates: out_cov };
    save_dataset(&ds, &out, &out_format).unwrap();
    assert_eq!(load_dataset(&out, &out_format).unwrap(), ds);
}

#[test]
fn non_increasing_grid_names_the_visit() {
    let dir = tempfile::tempdir().unwrap();
    let line = |s: &str, v: u32, grid: &str| {
        format!(
            r#"{{"subject_id":"{s}","visit":{v},"covariates":{{"x":0.5}},"response":{{"kind":"curve","grid":{grid},"values":[1,2,3]}}}}"#
        )
    };
    let text = [
        line("a", 0, "[0,1,2]"),
        line("a", 1, "[0,1,2]"),
        line("b", 0, "[0,1,2]"),
        line("b", 3, "[0,2,2]"),
    ]
    .join("\n");
    let path = write(dir.path(), "bad.ndjson", &text);
    let err = load_dataset(&path, &DatasetFormat::Ndjson).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains('b') && msg.contains('3'), "{msg}");
    assert!(matches!(err, Error::InvalidResponse { ref key, .. } if key.visit == 3), "{err:?}");
}

#[test]
fn perturbed_laplacian_reports_row_sums() {
    let dir = tempfile::tempdir().unwrap();
    let good = "[[1,-1,0],[-1,2,-1],[0,-1,1]]";
    // Raising two diagonal entries by 1e-3 keeps symmetry and sign pattern.
    let bad = "[[1.001,-1,0],[-1,2,-1],[0,-1,1.001]]";
    let line = |s: &str, v: u32, m: &str| {
        format!(r#"{{"subject_id":"{s}","visit":{v},"response":{{"kind":"laplacian","matrix":{m}}}}}"#)
    };
    let text = [line("a", 0, good), line("a", 1, good), line("b", 0, good), line("b", 1, bad)].join("\n");
    let path = write(dir.path(), "graphs.ndjson", &text);
    let msg = load_dataset(&path, &DatasetFormat::Ndjson).unwrap_err().to_string();
    assert!(msg.contains("row sums nonzero"), "{msg}");
    assert!(!msg.contains("asymmetric"), "{msg}");

    let fixed = text.replace(bad, good);
    fs::write(&path, fixed).unwrap();
    assert_eq!(load_dataset(&path, &DatasetFormat::Ndjson).unwrap().n_visits(), 4);
}

#[test]
fn mixed_response_kinds_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = [
        r#"{"subject_id":"a","visit":0,"response":{"kind":"curve","grid":[0,1],"values":[1,2]}}"#,
        r#"{"subject_id":"a","visit":1,"response":{"kind":"curve","grid":[0,1],"values":[1,2]}}"#,
        r#"{"subject_id":"b","visit":0,"response":{"kind":"laplacian","matrix":[[0]]}}"#,
    ]
    .join("\n");
    let path = write(dir.path(), "mixed.ndjson", &text);
    let err = load_dataset(&path, &DatasetFormat::Ndjson).unwrap_err();
    assert_eq!(err.kind(), "metric_mismatch", "{err}");
}

#[test]
fn malformed_line_reports_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let text = concat!(
        r#"{"subject_id":"a","visit":0,"response":{"kind":"curve","grid":[0,1],"values":[1,2]}}"#,
        "\n{not json\n"
    );
    let path = write(dir.path(), "broken.ndjson", text);
    let msg = load_dataset(&path, &DatasetFormat::Ndjson).unwrap_err().to_string();
    assert!(msg.contains(":2"), "{msg}");
}

#[derive(Clone, Debug)]
enum Shape {
    Curves(Vec<f64>),
    Clouds(usize),
    Graphs(usize),
}

fn shape() -> impl Strategy<Value = Shape> {
    prop_oneof![
        prop::collection::vec(0.01..3.0f64, 1..6).prop_map(|steps| {
            let mut g = vec![-1.0];
            for s in steps {
                g.push(g.last().unwrap() + s);
            }
            Shape::Curves(g)
        }),
        (1usize..4).prop_map(Shape::Clouds),
        (1usize..5).prop_map(Shape::Graphs),
    ]
}

fn response(shape: &Shape, seed: &[f64]) -> ResponseObject {
    let mut it = seed.iter().cycle().copied();
    match shape {
        Shape::Curves(g) => ResponseObject::Curve(Curve::new(g.clone(), g.iter().map(|_| it.next().unwrap()).collect()).unwrap()),
        Shape::Clouds(d) => {
            let m = 1 + (it.next().unwrap().abs() * 3.0) as usize % 4;
            let points = (0..m).map(|_| (0..*d).map(|_| it.next().unwrap()).collect()).collect();
            ResponseObject::PointCloud(PointCloud::uniform(points).unwrap())
        }
        Shape::Graphs(h) => {
            let mut rows = vec![vec![0.0; *h]; *h];
            for i in 0..*h {
                for j in i + 1..*h {
                    let w = it.next().unwrap().abs();
                    rows[i][j] = -w;
                    rows[j][i] = -w;
                    rows[i][i] += w;
                    rows[j][j] += w;
                }
            }
            ResponseObject::Laplacian(Laplacian::new(rows).unwrap())
        }
    }
}

fn dataset() -> impl Strategy<Value = LongitudinalDataset> {
    (
        shape(),
        prop::collection::vec(1usize..4, 2..5),
        0usize..3,
        prop::collection::vec(-1e3..1e3f64, 1..40),
    )
        .prop_map(|(shape, visits, p, numbers)| {
            let mut k = 0;
            let mut next = || {
                k += 1;
                numbers[k % numbers.len()] * (1.0 + k as f64 * 1e-7)
            };
            let subjects = visits
                .iter()
                .enumerate()
                .map(|(i, &nv)| Subject {
                    id: SubjectId::new(format!("subj-{i}")).unwrap(),
                    visits: (0..nv as u32)
                        .map(|v| {
                            let draws: Vec<f64> = (0..8).map(|_| next() / 100.0).collect();
                            Visit {
                                visit: v * 2 + 1,
                                covariates: CovariateVector::new((0..p).map(|_| next()).collect()).unwrap(),
                                response: response(&shape, &draws),
                            }
                        })
                        .collect(),
                })
                .collect();
            LongitudinalDataset::new((0..p).map(|j| format!("x{j}")).collect(), subjects).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ndjson_round_trip_is_exact(ds in dataset()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.ndjson");
        save_dataset(&ds, &path, &DatasetFormat::Ndjson).unwrap();
        prop_assert_eq!(load_dataset(&path, &DatasetFormat::Ndjson).unwrap(), ds);
    }

    #[test]
    fn loaded_objects_satisfy_their_invariants(
        values in prop::collection::vec(-5.0..5.0f64, 3),
        grid in prop::collection::vec(-5.0..5.0f64, 3),
        weights in prop::collection::vec(-0.5..1.0f64, 2),
        asym in -1.0..1.0f64,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let curve = format!(r#"{{"kind":"curve","grid":{grid:?},"values":{values:?}}}"#);
        let cloud = format!(r#"{{"kind":"point_cloud","points":[[0.0],[1.0]],"weights":{weights:?}}}"#);
        let graph = format!(r#"{{"kind":"laplacian","matrix":[[1.0,-1.0],[{},1.0]]}}"#, -1.0 + asym);
        for resp in [curve, cloud, graph] {
            let line = |s: &str, v: u32| format!(r#"{{"subject_id":"{s}","visit":{v},"response":{resp}}}"#);
            let text = [line("a", 0), line("a", 1), line("b", 0)].join("\n");
            let path = dir.path().join("d.ndjson");
            fs::write(&path, text).unwrap();
            let Ok(ds) = load_dataset(&path, &DatasetFormat::Ndjson) else { continue };
            for (_, v) in ds.iter() {
                match &v.response {
                    ResponseObject::Curve(c) => {
                        prop_assert!(c.grid().windows(2).all(|w| w[0] < w[1]));
                        prop_assert_eq!(c.grid().len(), c.values().len());
                    }
                    ResponseObject::PointCloud(p) => {
                        prop_assert!(p.weights().iter().all(|w| *w >= 0.0));
                        prop_assert!((p.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                    }
                    ResponseObject::Laplacian(l) => {
                        prop_assert!(metricre_core::data::validate_laplacian(&l.rows()).is_valid());
                    }
                }
            }
        }
    }
}
