//! Report files: per-individual table, aggregate summary, log-log scatter.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::{ConsistencyTable, EvaluationReport};
use crate::error::{Error, Result};

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            context: path.display().to_string(),
            message: format!("{other:?}"),
        },
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `per_individual.csv`, `aggregate.json` and `scatter.svg` into `out_dir`.
pub fn emit_report(report: &EvaluationReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let csv_path = out_dir.join("per_individual.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_error(&csv_path, e))?;
    w.write_record(["subject_id", "n_test", "mse_with_re", "mse_without_re"])
        .map_err(|e| csv_error(&csv_path, e))?;
    for r in &report.per_individual {
        w.write_record([
            r.subject_id.as_str().to_string(),
            r.n_test.to_string(),
            r.mse_with_re.to_string(),
            r.mse_without_re.to_string(),
        ])
        .map_err(|e| csv_error(&csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let agg_path = out_dir.join("aggregate.json");
    let aggregate = json!({
        "n_individuals": report.per_individual.len(),
        "mean_mse_with_re": report.mean_mse_with_re,
        "mean_mse_without_re": report.mean_mse_without_re,
        "fraction_below_diagonal": report.fraction_below_diagonal,
    });
    write_text(&agg_path, &format!("{}\n", serde_json::to_string_pretty(&aggregate).expect("json")))?;

    let svg_path = out_dir.join("scatter.svg");
    write_text(&svg_path, &render_scatter_svg(report))?;
    Ok(vec![csv_path, agg_path, svg_path])
}

const SIZE: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// Log-log scatter of (without RE, with RE) per individual with the identity line.
pub fn render_scatter_svg(report: &EvaluationReport) -> String {
    let pts: Vec<(f64, f64)> = report
        .per_individual
        .iter()
        .map(|r| (r.mse_without_re, r.mse_with_re))
        .collect();
    let positive = pts
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .filter(|v| *v > 0.0 && v.is_finite());
    let (lo, hi) = positive.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (1.0, 10.0) };
    // Zeros sit one decade below the smallest positive value.
    let floor = lo / 10.0;
    let (llo, lhi) = (floor.log10(), (hi * 1.5).log10().max(floor.log10() + 1.0));
    let scale = |v: f64| {
        let l = v.max(floor).log10();
        (l - llo) / (lhi - llo) * (SIZE - 2.0 * MARGIN)
    };
    let px = |v: f64| MARGIN + scale(v);
    let py = |v: f64| SIZE - MARGIN - scale(v);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (a, b) = (MARGIN, SIZE - MARGIN);
    let _ = writeln!(
        s,
        r#"<rect x="{a}" y="{a}" width="{w}" height="{w}" fill="none" stroke="black"/>"#,
        w = b - a
    );
    let _ = writeln!(
        s,
        r#"<line x1="{a}" y1="{b}" x2="{b}" y2="{a}" stroke="gray" stroke-dasharray="4 4"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{x}" y="{y}" text-anchor="middle" font-size="12">MSE without RE (log)</text>"#,
        x = SIZE / 2.0,
        y = SIZE - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{y}" text-anchor="middle" font-size="12" transform="rotate(-90 15 {y})">MSE with RE (log)</text>"#,
        y = SIZE / 2.0
    );
    for (without, with) in &pts {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="steelblue" fill-opacity="0.7"/>"#,
            px(*without),
            py(*with)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `consistency.csv` with one row per grid value.
pub fn emit_consistency(table: &ConsistencyTable, out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join("consistency.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record(["n", "mean_sq_error", "std_sq_error", "replicates"])
        .map_err(|e| csv_error(&path, e))?;
    for r in &table.rows {
        w.write_record([
            r.n.to_string(),
            r.mean_sq_error.to_string(),
            r.std_sq_error.to_string(),
            r.per_replicate.len().to_string(),
        ])
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubjectId;
    use crate::eval::IndividualError;

    fn row(s: &str, w: f64, wo: f64) -> IndividualError {
        IndividualError {
            subject_id: SubjectId::new(s).unwrap(),
            n_test: 2,
            mse_with_re: w,
            mse_without_re: wo,
        }
    }

    #[test]
    fn empty_report_files() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&EvaluationReport::from_rows(vec![]), dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("per_individual.csv")).unwrap();
        assert_eq!(csv, "subject_id,n_test,mse_with_re,mse_without_re\n");
        let agg: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("aggregate.json")).unwrap()).unwrap();
        assert!(agg["mean_mse_with_re"].is_null());
        assert!(agg["fraction_below_diagonal"].is_null());
        let svg = fs::read_to_string(dir.path().join("scatter.svg")).unwrap();
        assert_eq!(svg.matches("<circle").count(), 0);
    }

    #[test]
    fn fraction_matches_csv_recount_and_one_point_each() {
        let rep = EvaluationReport::from_rows(vec![row("a", 1.0, 2.0), row("b", 0.0, 3.0), row("c", 5.0, 4.0)]);
        let dir = tempfile::tempdir().unwrap();
        emit_report(&rep, dir.path()).unwrap();
        let mut rdr = csv::Reader::from_path(dir.path().join("per_individual.csv")).unwrap();
        let (mut below, mut total) = (0, 0);
        for rec in rdr.records() {
            let rec = rec.unwrap();
            let w: f64 = rec[2].parse().unwrap();
            let wo: f64 = rec[3].parse().unwrap();
            below += (w < wo) as usize;
            total += 1;
        }
        let agg: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("aggregate.json")).unwrap()).unwrap();
        assert_eq!(agg["fraction_below_diagonal"].as_f64().unwrap(), below as f64 / total as f64);
        let svg = fs::read_to_string(dir.path().join("scatter.svg")).unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
    }
}
