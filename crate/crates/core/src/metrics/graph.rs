use serde::{Deserialize, Serialize};

use crate::data::Laplacian;
use crate::error::{Error, Result};

/// Settings for turning hourly activity into a thresholded correlation graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphBuildConfig {
    pub hours: Vec<u32>,
    pub threshold: f64,
    pub slots_per_hour: usize,
}

impl Default for GraphBuildConfig {
    fn default() -> Self {
        GraphBuildConfig {
            hours: (7..=21).collect(),
            threshold: 0.3,
            slots_per_hour: 12,
        }
    }
}

impl GraphBuildConfig {
    pub fn n_hours(&self) -> usize {
        self.hours.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hours.len() < 2 {
            return Err(Error::InvalidConfig("graph needs at least 2 hours".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        if self.slots_per_hour < 2 {
            return Err(Error::InvalidConfig("need at least 2 slots per hour".into()));
        }
        Ok(())
    }
}

/// Pearson correlation with population (1/n) normalisation.
///
/// Returns `None` when either vector is exactly constant.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    if is_constant(a) || is_constant(b) {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    Some((sab / n) / ((saa / n).sqrt() * (sbb / n).sqrt()))
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&x| x == v[0])
}

/// Correlation graph Laplacian: edge (h, h') iff |corr| > threshold, L = D - A.
pub fn build_laplacian(activity: &[Vec<f64>], cfg: &GraphBuildConfig) -> Result<Laplacian> {
    cfg.validate()?;
    let h = cfg.n_hours();
    if activity.len() != h || activity.iter().any(|row| row.len() != cfg.slots_per_hour) {
        return Err(Error::ShapeMismatch(format!(
            "activity must be {h} x {}",
            cfg.slots_per_hour
        )));
    }
    if let Some(hour) = activity.iter().position(|row| is_constant(row)) {
        return Err(Error::UndefinedCorrelation { hour });
    }
    if activity.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::ShapeMismatch("activity has non-finite entries".into()));
    }
    let mut entries = vec![0.0; h * h];
    for r in 0..h {
        for c in r + 1..h {
            let corr = pearson_correlation(&activity[r], &activity[c])
                .ok_or(Error::UndefinedCorrelation { hour: r })?;
            if corr.abs() > cfg.threshold {
                entries[r * h + c] = -1.0;
                entries[c * h + r] = -1.0;
                entries[r * h + r] += 1.0;
                entries[c * h + c] += 1.0;
            }
        }
    }
    Ok(Laplacian::from_raw_unchecked(h, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::validate_laplacian;

    /// Hour vectors whose population correlation matrix equals `target` exactly
    /// (up to rounding): orthonormal centred basis times a Cholesky factor.
    fn vectors_with_correlation(target: &[[f64; 3]; 3], slots: usize) -> Vec<Vec<f64>> {
        let raw: Vec<Vec<f64>> = (0..3)
            .map(|k| (0..slots).map(|s| ((s * (k + 2) + k * k) as f64 * 0.7).sin()).collect())
            .collect();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for mut v in raw {
            let mean = v.iter().sum::<f64>() / slots as f64;
            v.iter_mut().for_each(|x| *x -= mean);
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
        let chol = nalgebra::Matrix3::from_fn(|r, c| target[r][c]).cholesky().unwrap().l();
        (0..3)
            .map(|h| {
                (0..slots)
                    .map(|s| (0..3).map(|k| chol[(h, k)] * basis[k][s]).sum::<f64>() + 5.0)
                    .collect()
            })
            .collect()
    }

    #[test]
    fn thresholds_hand_example() {
        let target = [[1.0, 0.5, 0.1], [0.5, 1.0, -0.4], [0.1, -0.4, 1.0]];
        let act = vectors_with_correlation(&target, 12);
        assert!((pearson_correlation(&act[0], &act[1]).unwrap() - 0.5).abs() < 1e-12);
        assert!((pearson_correlation(&act[1], &act[2]).unwrap() + 0.4).abs() < 1e-12);
        let cfg = GraphBuildConfig {
            hours: vec![7, 8, 9],
            ..GraphBuildConfig::default()
        };
        let l = build_laplacian(&act, &cfg).unwrap();
        assert_eq!(
            l.rows(),
            vec![vec![1.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 1.0]]
        );
        assert!(validate_laplacian(&l.rows()).is_valid());
    }

    #[test]
    fn weak_correlations_give_empty_graph() {
        let target = [[1.0, 0.1, 0.2], [0.1, 1.0, -0.25], [0.2, -0.25, 1.0]];
        let act = vectors_with_correlation(&target, 12);
        let cfg = GraphBuildConfig {
            hours: vec![1, 2, 3],
            ..GraphBuildConfig::default()
        };
        let l = build_laplacian(&act, &cfg).unwrap();
        assert_eq!(l, Laplacian::zeros(3));
    }

    #[test]
    fn constant_hour_is_rejected() {
        let cfg = GraphBuildConfig {
            hours: vec![1, 2],
            slots_per_hour: 3,
            ..GraphBuildConfig::default()
        };
        let act = vec![vec![1.0, 2.0, 3.0], vec![4.0, 4.0, 4.0]];
        assert!(matches!(
            build_laplacian(&act, &cfg),
            Err(Error::UndefinedCorrelation { hour: 1 })
        ));
    }

    #[test]
    fn threshold_is_strict() {
        let cfg = GraphBuildConfig {
            hours: vec![1, 2],
            slots_per_hour: 2,
            threshold: 0.3,
        };
        // Two points: correlation is exactly +-1.
        let l = build_laplacian(&[vec![0.0, 1.0], vec![1.0, 0.0]], &cfg).unwrap();
        assert_eq!(l.edge_count(), 1);
    }

    #[test]
    fn config_validation() {
        let mut cfg = GraphBuildConfig::default();
        assert_eq!(cfg.n_hours(), 15);
        cfg.threshold = 1.0;
        assert!(cfg.validate().is_err());
        cfg.threshold = 0.3;
        cfg.hours = vec![7];
        assert!(cfg.validate().is_err());
    }
}
