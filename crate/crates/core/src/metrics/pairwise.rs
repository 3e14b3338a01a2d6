use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::squared_distance;
use crate::data::{LongitudinalDataset, ResponseObject, VisitKey};
use crate::error::{Error, Result};

/// Squared distances between two ordered key lists.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    rows: Vec<VisitKey>,
    cols: Vec<VisitKey>,
    /// Row-major |rows| x |cols|.
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn rows(&self) -> &[VisitKey] {
        &self.rows
    }

    pub fn cols(&self) -> &[VisitKey] {
        &self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols.len() + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let n = self.cols.len();
        &self.values[r * n..(r + 1) * n]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows.len()).map(|r| self.get(r, c)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// CSV with a `key` column followed by one column per `cols` key.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            write!(out, "key")?;
            for c in &self.cols {
                write!(out, ",{c}")?;
            }
            writeln!(out)?;
            for (r, key) in self.rows.iter().enumerate() {
                write!(out, "{key}")?;
                for v in self.row(r) {
                    write!(out, ",{v}")?;
                }
                writeln!(out)?;
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }
}

/// Row-major matrix of squared distances between two object lists.
///
/// When `rows` and `cols` are the same list only the upper triangle is
/// evaluated. Every entry is written exactly once, so the output does not
/// depend on the number of worker threads.
pub fn pairwise_between(rows: &[&ResponseObject], cols: &[&ResponseObject]) -> Result<Vec<f64>> {
    let n = cols.len();
    let same = rows.len() == cols.len()
        && rows.iter().zip(cols).all(|(a, b)| std::ptr::eq(*a, *b));
    let mut values = vec![0.0; rows.len() * n];
    if n == 0 {
        return Ok(values);
    }
    values
        .par_chunks_mut(n)
        .enumerate()
        .try_for_each(|(r, out)| -> Result<()> {
            let start = if same { r + 1 } else { 0 };
            for c in start..n {
                out[c] = squared_distance(rows[r], cols[c])?;
            }
            Ok(())
        })?;
    if same {
        for r in 0..n {
            for c in 0..r {
                values[r * n + c] = values[c * n + r];
            }
        }
    }
    Ok(values)
}

pub fn pairwise_squared_distances(
    rows: &[VisitKey],
    cols: &[VisitKey],
    dataset: &LongitudinalDataset,
) -> Result<DistanceMatrix> {
    let row_objs = rows
        .iter()
        .map(|k| dataset.response(k))
        .collect::<Result<Vec<_>>>()?;
    let values = if rows == cols {
        pairwise_between(&row_objs, &row_objs)?
    } else {
        let col_objs = cols
            .iter()
            .map(|k| dataset.response(k))
            .collect::<Result<Vec<_>>>()?;
        pairwise_between(&row_objs, &col_objs)?
    };
    Ok(DistanceMatrix {
        rows: rows.to_vec(),
        cols: cols.to_vec(),
        values,
    })
}
