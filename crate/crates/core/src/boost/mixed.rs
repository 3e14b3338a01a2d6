//! Random-intercept Gaussian model: BLUPs, one EM step, marginal likelihood.
//!
//! For a subject with residuals e_1..e_n (fixed effect removed) the model is
//! e_j = b + eps_j with b ~ N(0, sigma_b^2), eps_j ~ N(0, sigma^2). The posterior of b is
//! Gaussian with mean n sigma_b^2 / (n sigma_b^2 + sigma^2) * mean(e) and variance
//! sigma^2 sigma_b^2 / (sigma^2 + n sigma_b^2).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::SubjectId;

pub const SIGMA_SQ_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceComponents {
    pub sigma_b_sq: f64,
    pub sigma_sq: f64,
}

impl VarianceComponents {
    /// Clamps to sigma_b^2 >= 0 and sigma^2 >= 1e-12.
    pub fn new(sigma_b_sq: f64, sigma_sq: f64) -> Self {
        VarianceComponents {
            sigma_b_sq: if sigma_b_sq.is_nan() { 0.0 } else { sigma_b_sq.max(0.0) },
            sigma_sq: if sigma_sq.is_nan() {
                SIGMA_SQ_FLOOR
            } else {
                sigma_sq.max(SIGMA_SQ_FLOOR)
            },
        }
    }

    pub fn shrinkage(&self, n: usize) -> f64 {
        let nb = n as f64 * self.sigma_b_sq;
        if nb == 0.0 {
            0.0
        } else {
            nb / (nb + self.sigma_sq)
        }
    }

    pub fn posterior_variance(&self, n: usize) -> f64 {
        let denom = self.sigma_sq + n as f64 * self.sigma_b_sq;
        self.sigma_sq * self.sigma_b_sq / denom
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Posterior mean of each group's intercept.
pub fn blup_groups<G: AsRef<[f64]>>(groups: &[G], vc: &VarianceComponents) -> Vec<f64> {
    groups
        .iter()
        .map(|g| {
            let g = g.as_ref();
            vc.shrinkage(g.len()) * mean(g)
        })
        .collect()
}

/// One EM update of (sigma_b^2, sigma^2) given residual groups.
pub fn em_step_groups<G: AsRef<[f64]>>(groups: &[G], vc: &VarianceComponents) -> VarianceComponents {
    let n_groups = groups.len() as f64;
    let mut total_obs = 0usize;
    let mut b_moment = 0.0;
    let mut resid_moment = 0.0;
    for g in groups {
        let g = g.as_ref();
        let n = g.len();
        let b = vc.shrinkage(n) * mean(g);
        let v = vc.posterior_variance(n);
        b_moment += b * b + v;
        resid_moment += g.iter().map(|e| (e - b) * (e - b)).sum::<f64>() + n as f64 * v;
        total_obs += n;
    }
    VarianceComponents::new(b_moment / n_groups, resid_moment / total_obs as f64)
}

/// Gaussian marginal log-likelihood of the residual groups with b integrated out.
pub fn marginal_log_likelihood_groups<G: AsRef<[f64]>>(groups: &[G], vc: &VarianceComponents) -> f64 {
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let (sb, s) = (vc.sigma_b_sq, vc.sigma_sq);
    groups
        .iter()
        .map(|g| {
            let g = g.as_ref();
            let n = g.len() as f64;
            let sum: f64 = g.iter().sum();
            let sum_sq: f64 = g.iter().map(|e| e * e).sum();
            let denom = s + n * sb;
            let log_det = (n - 1.0) * s.ln() + denom.ln();
            let quad = (sum_sq - sb * sum * sum / denom) / s;
            -0.5 * (n * ln_2pi + log_det + quad)
        })
        .sum()
}

/// BLUP of every subject's random intercept from its residuals.
pub fn blup_intercepts(
    residuals: &BTreeMap<SubjectId, Vec<f64>>,
    vc: &VarianceComponents,
) -> BTreeMap<SubjectId, f64> {
    let groups: Vec<&Vec<f64>> = residuals.values().collect();
    residuals
        .keys()
        .cloned()
        .zip(blup_groups(&groups, vc))
        .collect()
}

pub fn em_variance_step(
    residuals: &BTreeMap<SubjectId, Vec<f64>>,
    vc: &VarianceComponents,
) -> VarianceComponents {
    let groups: Vec<&Vec<f64>> = residuals.values().collect();
    em_step_groups(&groups, vc)
}

pub fn marginal_log_likelihood(
    residuals: &BTreeMap<SubjectId, Vec<f64>>,
    vc: &VarianceComponents,
) -> f64 {
    let groups: Vec<&Vec<f64>> = residuals.values().collect();
    marginal_log_likelihood_groups(&groups, vc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sid(s: &str) -> SubjectId {
        SubjectId::new(s).unwrap()
    }

    fn map(groups: &[(&str, Vec<f64>)]) -> BTreeMap<SubjectId, Vec<f64>> {
        groups.iter().map(|(k, v)| (sid(k), v.clone())).collect()
    }

    #[test]
    fn blup_examples() {
        let one = VarianceComponents::new(1.0, 1.0);
        let r = map(&[("a", vec![2.0])]);
        assert_eq!(blup_intercepts(&r, &one)[&sid("a")], 1.0);
        let r = map(&[("a", vec![2.0; 1000])]);
        assert!((blup_intercepts(&r, &one)[&sid("a")] - 2000.0 / 1001.0).abs() < 1e-12);
        let none = VarianceComponents::new(0.0, 1.0);
        assert_eq!(blup_intercepts(&r, &none)[&sid("a")], 0.0);
    }

    #[test]
    fn hand_em_step() {
        let r = map(&[("a", vec![1.0, 1.0]), ("b", vec![-1.0, -1.0])]);
        let next = em_variance_step(&r, &VarianceComponents::new(1.0, 1.0));
        assert!((next.sigma_b_sq - 7.0 / 9.0).abs() < 1e-12);
        assert!((next.sigma_sq - 4.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn zero_residuals_leave_only_posterior_variance() {
        let r = map(&[("a", vec![0.0; 3]), ("b", vec![0.0])]);
        let vc = VarianceComponents::new(0.5, 2.0);
        let next = em_variance_step(&r, &vc);
        let (va, vb) = (vc.posterior_variance(3), vc.posterior_variance(1));
        assert!((next.sigma_b_sq - (va + vb) / 2.0).abs() < 1e-15);
        assert!((next.sigma_sq - (3.0 * va + vb) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn floor_applies() {
        let r = map(&[("a", vec![1.0]), ("b", vec![-1.0])]);
        let next = em_variance_step(&r, &VarianceComponents::new(1e6, 1e-12));
        assert!(next.sigma_sq >= SIGMA_SQ_FLOOR);
    }

    #[test]
    fn marginal_likelihood_matches_dense_formula() {
        let g = vec![0.3, -1.2, 0.8];
        let vc = VarianceComponents::new(0.7, 0.4);
        let ll = marginal_log_likelihood_groups(std::slice::from_ref(&g), &vc);
        // Dense: V = s I + sb 11^T.
        let n = g.len();
        let v = nalgebra::DMatrix::from_fn(n, n, |r, c| {
            vc.sigma_b_sq + if r == c { vc.sigma_sq } else { 0.0 }
        });
        let e = nalgebra::DVector::from_vec(g);
        let chol = v.clone().cholesky().unwrap();
        let quad = e.dot(&chol.solve(&e));
        let log_det = v.determinant().ln();
        let dense = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + quad);
        assert!((ll - dense).abs() < 1e-12);
    }
}
