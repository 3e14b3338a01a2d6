//! Dataset file formats.
//!
//! * Curves: a response CSV with header `subject_id,visit,t_<g0>,...,t_<gG-1>`
//!   plus a companion covariate CSV `subject_id,visit,<feature>...`.
//! * Any kind: newline-delimited JSON, one record per visit:
//!   `{"subject_id": s, "visit": j, "covariates": {...}, "response": {"kind": ...}}`.
//!
//! Numbers are written in shortest round-trip decimal form, so a save/load
//! cycle is lossless.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::response::RawResponse;
use super::{
    CovariateVector, Curve, LongitudinalDataset, MetricKind, ResponseObject, Subject, SubjectId,
    Tolerances, Visit, VisitKey,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    /// Curve responses in CSV with the given companion covariate CSV.
    CurveCsv { covariates: PathBuf },
    Ndjson,
}

impl DatasetFormat {
    /// `.csv` files are curve tables and need a companion covariate file;
    /// anything else is read as NDJSON.
    pub fn infer(path: &Path, covariates: Option<&Path>) -> Result<Self> {
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        match (is_csv, covariates) {
            (true, Some(c)) => Ok(DatasetFormat::CurveCsv {
                covariates: c.to_path_buf(),
            }),
            (true, None) => Err(Error::InvalidConfig(format!(
                "{} is a curve CSV and needs a companion covariate file",
                path.display()
            ))),
            (false, _) => Ok(DatasetFormat::Ndjson),
        }
    }
}

/// Covariates keyed by visit, as read from a companion CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<(VisitKey, CovariateVector)>,
}

pub fn load_dataset(path: &Path, format: &DatasetFormat) -> Result<LongitudinalDataset> {
    load_dataset_with(path, format, &Tolerances::default())
}

pub fn load_dataset_with(
    path: &Path,
    format: &DatasetFormat,
    tol: &Tolerances,
) -> Result<LongitudinalDataset> {
    match format {
        DatasetFormat::CurveCsv { covariates } => load_curve_csv(path, covariates),
        DatasetFormat::Ndjson => load_ndjson(path, tol),
    }
}

pub fn save_dataset(dataset: &LongitudinalDataset, path: &Path, format: &DatasetFormat) -> Result<()> {
    match format {
        DatasetFormat::CurveCsv { covariates } => {
            save_curve_csv(dataset, path)?;
            let table = CovariateTable {
                feature_names: dataset.feature_names().to_vec(),
                rows: dataset
                    .iter()
                    .map(|(k, v)| (k, v.covariates.clone()))
                    .collect(),
            };
            write_covariate_table(&table, covariates)
        }
        DatasetFormat::Ndjson => save_ndjson(dataset, path),
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let context = match err.position() {
        Some(pos) => format!("{}:{}", path.display(), pos.line()),
        None => path.display().to_string(),
    };
    Error::Parse {
        context,
        message: err.to_string(),
    }
}

fn parse_f64(field: &str, context: impl FnOnce() -> String) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|e| Error::Parse {
        context: context(),
        message: format!("bad number {field:?}: {e}"),
    })
}

fn parse_key(subject: &str, visit: &str, context: impl Fn() -> String) -> Result<VisitKey> {
    let subject_id = SubjectId::new(subject.trim()).map_err(|_| Error::Parse {
        context: context(),
        message: "empty subject_id".into(),
    })?;
    let visit = visit.trim().parse::<u32>().map_err(|e| Error::Parse {
        context: context(),
        message: format!("bad visit index {visit:?}: {e}"),
    })?;
    Ok(VisitKey::new(subject_id, visit))
}

fn check_key_header(path: &Path, headers: &csv::StringRecord) -> Result<()> {
    if headers.get(0) != Some("subject_id") || headers.get(1) != Some("visit") {
        return Err(Error::Parse {
            context: format!("{}:1", path.display()),
            message: "header must start with subject_id,visit".into(),
        });
    }
    Ok(())
}

pub fn read_covariate_table(path: &Path) -> Result<CovariateTable> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    check_key_header(path, &headers)?;
    let feature_names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let ctx = || format!("{}:{line}", path.display());
        let key = parse_key(&record[0], &record[1], ctx)?;
        let values = record
            .iter()
            .skip(2)
            .map(|f| parse_f64(f, ctx))
            .collect::<Result<Vec<_>>>()?;
        let covariates = CovariateVector::new(values).map_err(|_| Error::InvalidResponse {
            key: key.clone(),
            message: "non-finite covariate".into(),
        })?;
        if !seen.insert(key.clone()) {
            return Err(Error::Parse {
                context: ctx(),
                message: format!("duplicate covariate row for {key}"),
            });
        }
        rows.push((key, covariates));
    }
    Ok(CovariateTable {
        feature_names,
        rows,
    })
}

pub fn write_covariate_table(table: &CovariateTable, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let mut write = || -> std::io::Result<()> {
        write!(out, "subject_id,visit")?;
        for name in &table.feature_names {
            write!(out, ",{name}")?;
        }
        writeln!(out)?;
        for (key, cov) in &table.rows {
            write!(out, "{},{}", key.subject_id, key.visit)?;
            for v in cov.values() {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

fn load_curve_csv(path: &Path, covariates: &Path) -> Result<LongitudinalDataset> {
    let table = read_covariate_table(covariates)?;
    let mut cov_by_key: BTreeMap<VisitKey, CovariateVector> = table.rows.into_iter().collect();

    let mut reader = csv::Reader::from_reader(open(path)?);
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    check_key_header(path, &headers)?;
    let grid = headers
        .iter()
        .skip(2)
        .map(|h| {
            let value = h.strip_prefix("t_").ok_or_else(|| Error::Parse {
                context: format!("{}:1", path.display()),
                message: format!("grid column {h:?} must be named t_<value>"),
            })?;
            parse_f64(value, || format!("{}:1", path.display()))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut subjects: BTreeMap<SubjectId, Vec<Visit>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let ctx = || format!("{}:{line}", path.display());
        let key = parse_key(&record[0], &record[1], ctx)?;
        let values = record
            .iter()
            .skip(2)
            .map(|f| parse_f64(f, ctx))
            .collect::<Result<Vec<_>>>()?;
        let curve = Curve::new(grid.clone(), values).map_err(|message| Error::InvalidResponse {
            key: key.clone(),
            message,
        })?;
        let covariates = cov_by_key.remove(&key).ok_or_else(|| Error::InvalidResponse {
            key: key.clone(),
            message: format!("no covariate row in {}", covariates.display()),
        })?;
        subjects.entry(key.subject_id).or_default().push(Visit {
            visit: key.visit,
            covariates,
            response: ResponseObject::Curve(curve),
        });
    }
    LongitudinalDataset::new(
        table.feature_names,
        subjects
            .into_iter()
            .map(|(id, visits)| Subject { id, visits })
            .collect(),
    )
}

fn save_curve_csv(dataset: &LongitudinalDataset, path: &Path) -> Result<()> {
    if dataset.metric_kind() != MetricKind::Curve {
        return Err(Error::MetricMismatch {
            expected: MetricKind::Curve.to_string(),
            found: dataset.metric_kind().to_string(),
        });
    }
    let mut out = create(path)?;
    let mut write = || -> std::io::Result<()> {
        write!(out, "subject_id,visit")?;
        if let Some((_, first)) = dataset.iter().next() {
            if let ResponseObject::Curve(c) = &first.response {
                for t in c.grid() {
                    write!(out, ",t_{t}")?;
                }
            }
        }
        writeln!(out)?;
        for (key, visit) in dataset.iter() {
            write!(out, "{},{}", key.subject_id, key.visit)?;
            if let ResponseObject::Curve(c) = &visit.response {
                for v in c.values() {
                    write!(out, ",{v}")?;
                }
            }
            writeln!(out)?;
        }
        out.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct RecordIn {
    subject_id: String,
    visit: u32,
    #[serde(default)]
    covariates: serde_json::Map<String, serde_json::Value>,
    response: RawResponse,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    subject_id: &'a str,
    visit: u32,
    covariates: serde_json::Map<String, serde_json::Value>,
    response: RawResponse,
}

fn load_ndjson(path: &Path, tol: &Tolerances) -> Result<LongitudinalDataset> {
    let reader = BufReader::new(open(path)?);
    let mut feature_names: Option<Vec<String>> = None;
    let mut subjects: BTreeMap<SubjectId, Vec<Visit>> = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ctx = || format!("{}:{}", path.display(), lineno + 1);
        let record: RecordIn = serde_json::from_str(&line).map_err(|e| Error::Parse {
            context: ctx(),
            message: e.to_string(),
        })?;
        let key = parse_key(&record.subject_id, &record.visit.to_string(), ctx)?;
        let names = feature_names.get_or_insert_with(|| record.covariates.keys().cloned().collect());
        if names.len() != record.covariates.len() {
            return Err(Error::Parse {
                context: ctx(),
                message: "covariate names differ from the first record".into(),
            });
        }
        let values = names
            .iter()
            .map(|name| {
                record
                    .covariates
                    .get(name)
                    .and_then(serde_json::Value::as_f64)
                    .ok_or_else(|| Error::Parse {
                        context: ctx(),
                        message: format!("missing or non-numeric covariate {name:?}"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let covariates = CovariateVector::new(values).map_err(|_| Error::InvalidResponse {
            key: key.clone(),
            message: "non-finite covariate".into(),
        })?;
        let response = ResponseObject::from_raw(record.response, tol).map_err(|message| {
            Error::InvalidResponse {
                key: key.clone(),
                message,
            }
        })?;
        subjects.entry(key.subject_id).or_default().push(Visit {
            visit: key.visit,
            covariates,
            response,
        });
    }
    LongitudinalDataset::new(
        feature_names.unwrap_or_default(),
        subjects
            .into_iter()
            .map(|(id, visits)| Subject { id, visits })
            .collect(),
    )
}

fn save_ndjson(dataset: &LongitudinalDataset, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    for (key, visit) in dataset.iter() {
        let covariates = dataset
            .feature_names()
            .iter()
            .zip(visit.covariates.values())
            .map(|(name, &v)| (name.clone(), serde_json::Value::from(v)))
            .collect();
        let record = RecordOut {
            subject_id: key.subject_id.as_str(),
            visit: key.visit,
            covariates,
            response: visit.response.clone().into(),
        };
        let line = serde_json::to_string(&record).expect("dataset records serialize");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
