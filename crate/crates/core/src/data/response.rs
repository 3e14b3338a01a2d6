use std::fmt;

use serde::{Deserialize, Serialize};

/// Numerical tolerances used when validating response objects.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Maximum allowed |L_ij - L_ji| and |row sum| for Laplacians.
    pub laplacian: f64,
    /// Maximum allowed |sum(weights) - 1| for point clouds.
    pub weight_sum: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            laplacian: 1e-10,
            weight_sum: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Curve,
    PointCloud,
    Laplacian,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Curve => "curve",
            MetricKind::PointCloud => "point_cloud",
            MetricKind::Laplacian => "laplacian",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "curve" | "curves" => Ok(MetricKind::Curve),
            "point_cloud" | "distributions" | "distribution" => Ok(MetricKind::PointCloud),
            "laplacian" | "graphs" | "graph" => Ok(MetricKind::Laplacian),
            other => Err(format!("unknown metric kind {other:?}")),
        }
    }
}

/// A function sampled on a strictly increasing grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self, String> {
        if grid.len() < 2 {
            return Err(format!("curve grid needs at least 2 points, got {}", grid.len()));
        }
        if grid.len() != values.len() {
            return Err(format!(
                "curve has {} grid points but {} values",
                grid.len(),
                values.len()
            ));
        }
        if grid.iter().any(|t| !t.is_finite()) {
            return Err("curve grid has non-finite entries".into());
        }
        if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
            return Err(format!(
                "curve grid not strictly increasing ({} then {})",
                w[0], w[1]
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err("curve has non-finite values".into());
        }
        Ok(Curve { grid, values })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A discrete probability measure on R^d.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    dim: usize,
    /// Row-major m x dim.
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self, String> {
        Self::with_tolerances(points, weights, &Tolerances::default())
    }

    pub fn with_tolerances(
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
        tol: &Tolerances,
    ) -> Result<Self, String> {
        let m = points.len();
        if m == 0 {
            return Err("point cloud is empty".into());
        }
        if weights.len() != m {
            return Err(format!("point cloud has {m} points but {} weights", weights.len()));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err("point cloud has zero ambient dimension".into());
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err("point cloud rows have inconsistent dimension".into());
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err("point cloud has non-finite coordinates".into());
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err("point cloud weights must be finite and nonnegative".into());
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > tol.weight_sum {
            return Err(format!("point cloud weights sum to {total}, not 1"));
        }
        Ok(PointCloud {
            dim,
            points: points.into_iter().flatten().collect(),
            weights,
        })
    }

    /// Equal mass on every point.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self, String> {
        let m = points.len();
        if m == 0 {
            return Err("point cloud is empty".into());
        }
        let w = 1.0 / m as f64;
        let cloud = Self::with_tolerances(points, vec![w; m], &Tolerances {
            weight_sum: 1e-9,
            ..Tolerances::default()
        })?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when every weight equals 1/m exactly as written by [`PointCloud::uniform`].
    pub fn is_uniform(&self) -> bool {
        let w0 = self.weights[0];
        self.weights.iter().all(|&w| w == w0)
    }
}

/// Graph Laplacian L = D - A of an undirected graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Laplacian {
    size: usize,
    /// Row-major size x size.
    entries: Vec<f64>,
}

impl Laplacian {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, String> {
        Self::with_tolerances(rows, &Tolerances::default())
    }

    pub fn with_tolerances(rows: Vec<Vec<f64>>, tol: &Tolerances) -> Result<Self, String> {
        let diag = validate_laplacian_with(&rows, tol);
        if !diag.is_valid() {
            return Err(diag.to_string());
        }
        let size = rows.len();
        Ok(Laplacian {
            size,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    /// Build from a row-major buffer without validation. Caller guarantees the invariants.
    pub(crate) fn from_raw_unchecked(size: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), size * size);
        Laplacian { size, entries }
    }

    pub fn zeros(size: usize) -> Self {
        Laplacian {
            size,
            entries: vec![0.0; size * size],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.size + c]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks_exact(self.size).map(<[f64]>::to_vec).collect()
    }

    pub fn edge_count(&self) -> usize {
        let mut count = 0;
        for r in 0..self.size {
            for c in r + 1..self.size {
                if self.get(r, c) != 0.0 {
                    count += 1;
                }
            }
        }
        count
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.size == 0 {
            return 0.0;
        }
        let m = nalgebra::DMatrix::from_row_slice(self.size, self.size, &self.entries);
        m.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LaplacianCheck {
    NotSquare,
    NonFinite,
    Asymmetric,
    RowSumsNonzero,
    PositiveOffDiagonal,
    NegativeDiagonal,
}

impl LaplacianCheck {
    pub fn label(self) -> &'static str {
        match self {
            LaplacianCheck::NotSquare => "not square",
            LaplacianCheck::NonFinite => "non-finite entries",
            LaplacianCheck::Asymmetric => "asymmetric",
            LaplacianCheck::RowSumsNonzero => "row sums nonzero",
            LaplacianCheck::PositiveOffDiagonal => "positive off-diagonal",
            LaplacianCheck::NegativeDiagonal => "negative diagonal",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianFailure {
    pub check: LaplacianCheck,
    pub max_violation: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LaplacianDiagnostics {
    pub failures: Vec<LaplacianFailure>,
}

impl LaplacianDiagnostics {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn failed(&self, check: LaplacianCheck) -> bool {
        self.failures.iter().any(|f| f.check == check)
    }
}

impl fmt::Display for LaplacianDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.failures.is_empty() {
            return f.write_str("valid laplacian");
        }
        for (i, fail) in self.failures.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{} (max violation {:e})", fail.check.label(), fail.max_violation)?;
        }
        Ok(())
    }
}

pub fn validate_laplacian(rows: &[Vec<f64>]) -> LaplacianDiagnostics {
    validate_laplacian_with(rows, &Tolerances::default())
}

pub fn validate_laplacian_with(rows: &[Vec<f64>], tol: &Tolerances) -> LaplacianDiagnostics {
    let n = rows.len();
    let mut diag = LaplacianDiagnostics::default();
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        diag.failures.push(LaplacianFailure {
            check: LaplacianCheck::NotSquare,
            max_violation: (bad.len() as f64 - n as f64).abs(),
        });
        return diag;
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        diag.failures.push(LaplacianFailure {
            check: LaplacianCheck::NonFinite,
            max_violation: f64::INFINITY,
        });
        return diag;
    }
    let mut asym = 0.0_f64;
    let mut row_sum = 0.0_f64;
    let mut pos_off = 0.0_f64;
    let mut neg_diag = 0.0_f64;
    for r in 0..n {
        row_sum = row_sum.max(rows[r].iter().sum::<f64>().abs());
        for c in 0..n {
            let v = rows[r][c];
            if r == c {
                neg_diag = neg_diag.max(-v);
            } else {
                pos_off = pos_off.max(v);
                asym = asym.max((v - rows[c][r]).abs());
            }
        }
    }
    let mut push = |check, violation: f64, limit: f64| {
        if violation > limit {
            diag.failures.push(LaplacianFailure {
                check,
                max_violation: violation,
            });
        }
    };
    push(LaplacianCheck::Asymmetric, asym, tol.laplacian);
    push(LaplacianCheck::RowSumsNonzero, row_sum, tol.laplacian);
    push(LaplacianCheck::PositiveOffDiagonal, pos_off, tol.laplacian);
    push(LaplacianCheck::NegativeDiagonal, neg_diag, tol.laplacian);
    diag
}

/// A point of the response metric space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawResponse", into = "RawResponse")]
pub enum ResponseObject {
    Curve(Curve),
    PointCloud(PointCloud),
    Laplacian(Laplacian),
}

impl ResponseObject {
    pub fn kind(&self) -> MetricKind {
        match self {
            ResponseObject::Curve(_) => MetricKind::Curve,
            ResponseObject::PointCloud(_) => MetricKind::PointCloud,
            ResponseObject::Laplacian(_) => MetricKind::Laplacian,
        }
    }

    /// Short description of the shape that must agree across a dataset.
    pub(crate) fn shape_signature(&self) -> ShapeSignature<'_> {
        match self {
            ResponseObject::Curve(c) => ShapeSignature::Grid(c.grid()),
            ResponseObject::PointCloud(p) => ShapeSignature::Dim(p.dim()),
            ResponseObject::Laplacian(l) => ShapeSignature::Size(l.size()),
        }
    }

    pub(crate) fn from_raw(raw: RawResponse, tol: &Tolerances) -> Result<Self, String> {
        Ok(match raw {
            RawResponse::Curve { grid, values } => ResponseObject::Curve(Curve::new(grid, values)?),
            RawResponse::PointCloud { points, weights } => {
                let weights = match weights {
                    Some(w) => w,
                    None => {
                        let m = points.len().max(1);
                        vec![1.0 / m as f64; points.len()]
                    }
                };
                ResponseObject::PointCloud(PointCloud::with_tolerances(points, weights, tol)?)
            }
            RawResponse::Laplacian { matrix } => {
                ResponseObject::Laplacian(Laplacian::with_tolerances(matrix, tol)?)
            }
        })
    }
}

#[derive(Debug, PartialEq)]
pub(crate) enum ShapeSignature<'a> {
    Grid(&'a [f64]),
    Dim(usize),
    Size(usize),
}

/// Wire form of a response object.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub(crate) enum RawResponse {
    Curve {
        grid: Vec<f64>,
        values: Vec<f64>,
    },
    PointCloud {
        points: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    Laplacian {
        matrix: Vec<Vec<f64>>,
    },
}

impl TryFrom<RawResponse> for ResponseObject {
    type Error = String;

    fn try_from(raw: RawResponse) -> Result<Self, Self::Error> {
        ResponseObject::from_raw(raw, &Tolerances::default())
    }
}

impl From<ResponseObject> for RawResponse {
    fn from(obj: ResponseObject) -> Self {
        match obj {
            ResponseObject::Curve(c) => RawResponse::Curve {
                grid: c.grid,
                values: c.values,
            },
            ResponseObject::PointCloud(p) => RawResponse::PointCloud {
                points: p.points.chunks_exact(p.dim).map(<[f64]>::to_vec).collect(),
                weights: Some(p.weights),
            },
            ResponseObject::Laplacian(l) => RawResponse::Laplacian { matrix: l.rows() },
        }
    }
}
