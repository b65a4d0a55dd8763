use serde::{Deserialize, Serialize};

use super::CascadeError;
use crate::reliability::FailureDistribution;

const DAMPING: f64 = 0.5;
const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_CAP: usize = 100_000;

/// Threshold cascade on a random graph: `degree_dist[d]` is the probability
/// of degree `d`, thresholds take value `thresholds[i]` with probability
/// `threshold_probs[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeModelParams {
    pub n: usize,
    pub degree_dist: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub threshold_probs: Vec<f64>,
}

impl DegreeModelParams {
    /// Thresholds spread uniformly over `[lo, hi]` on a grid of `points` midpoints.
    pub fn with_uniform_thresholds(n: usize, degree_dist: Vec<f64>, lo: f64, hi: f64, points: usize) -> Self {
        let w = (hi - lo) / points as f64;
        Self {
            n,
            degree_dist,
            thresholds: (0..points).map(|i| lo + (i as f64 + 0.5) * w).collect(),
            threshold_probs: vec![1.0 / points as f64; points],
        }
    }

    /// Poisson(z) degrees truncated at `d_max` and renormalized.
    pub fn poisson_degrees(z: f64, d_max: usize) -> Vec<f64> {
        let mut w = Vec::with_capacity(d_max + 1);
        let mut term = (-z).exp();
        for d in 0..=d_max {
            if d > 0 {
                term *= z / d as f64;
            }
            w.push(term);
        }
        let s: f64 = w.iter().sum();
        w.iter().map(|x| x / s).collect()
    }

    pub fn mean_degree(&self) -> f64 {
        self.degree_dist.iter().enumerate().map(|(d, p)| d as f64 * p).sum()
    }

    pub fn validate(&self) -> Result<(), CascadeError> {
        let bad = |m: &str| Err(CascadeError::InvalidParams(m.into()));
        if self.thresholds.len() != self.threshold_probs.len() || self.thresholds.is_empty() {
            return bad("threshold grid and masses must have equal, non-zero length");
        }
        if self.thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return bad("thresholds must lie in (0,1]");
        }
        for pmf in [&self.degree_dist, &self.threshold_probs] {
            if pmf.iter().any(|p| !(0.0..=1.0).contains(p)) || (pmf.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad("degree and threshold pmfs must be valid and sum to 1");
            }
        }
        if self.mean_degree() <= 0.0 {
            return bad("mean degree must be positive");
        }
        Ok(())
    }
}

/// `rho[d]`: probability a degree-`d` node fails once a single neighbor fails.
pub fn rho(params: &DegreeModelParams) -> Vec<f64> {
    (0..params.degree_dist.len())
        .map(|d| {
            if d == 0 {
                return 1.0;
            }
            let cut = 1.0 / d as f64 + 1e-12;
            params
                .thresholds
                .iter()
                .zip(&params.threshold_probs)
                .filter(|(t, _)| **t <= cut)
                .map(|(_, m)| m)
                .sum()
        })
        .collect()
}

pub fn degree_cascade_condition(params: &DegreeModelParams) -> Result<bool, CascadeError> {
    params.validate()?;
    let r = rho(params);
    let rhs: f64 = params
        .degree_dist
        .iter()
        .enumerate()
        .map(|(d, p)| d as f64 * (d as f64 - 1.0) * r[d] * p)
        .sum();
    Ok(params.mean_degree() < rhs)
}

fn poly(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
}

pub fn degree_cascade_probability(params: &DegreeModelParams) -> Result<f64, CascadeError> {
    if !degree_cascade_condition(params)? {
        return Ok(0.0);
    }
    let z = params.mean_degree();
    let r = rho(params);
    let g0: Vec<f64> = params.degree_dist.iter().zip(&r).map(|(p, q)| p * q).collect();
    let g1: Vec<f64> = g0.iter().enumerate().skip(1).map(|(d, c)| d as f64 * c / z).collect();
    let (g0_one, g1_one) = (poly(&g0, 1.0), poly(&g1, 1.0));
    let mut h = 0.0;
    let mut converged = false;
    for _ in 0..FIXED_POINT_CAP {
        let next = (1.0 - DAMPING) * h + DAMPING * (1.0 - g1_one + poly(&g1, h));
        let delta = (next - h).abs();
        h = next;
        if delta < FIXED_POINT_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(CascadeError::NoConvergence(FIXED_POINT_CAP));
    }
    let base = (1.0 - g0_one + poly(&g0, h)).clamp(0.0, 1.0);
    let f: f64 = params
        .degree_dist
        .iter()
        .enumerate()
        .map(|(d, p)| (1.0 - base.powi(d as i32)) * p)
        .sum();
    Ok(f.clamp(0.0, 1.0))
}

/// All mass on `n - 1` and `n` failures.
pub fn degree_worst_case_distribution(params: &DegreeModelParams) -> Result<FailureDistribution, CascadeError> {
    let n = params.n;
    if n == 0 {
        return Err(CascadeError::InvalidParams("n must be >= 1".into()));
    }
    let f = degree_cascade_probability(params)?;
    let mut probs = vec![0.0; n + 1];
    probs[n] = f;
    probs[n - 1] += 1.0 - f;
    Ok(FailureDistribution { n, probs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(d: usize, phi: f64) -> DegreeModelParams {
        let mut degree_dist = vec![0.0; d + 1];
        degree_dist[d] = 1.0;
        DegreeModelParams {
            n: 10,
            degree_dist,
            thresholds: vec![phi],
            threshold_probs: vec![1.0],
        }
    }

    #[test]
    fn robust_nodes_do_not_cascade() {
        let p = point(3, 1.0);
        assert_eq!(rho(&p)[3], 0.0);
        assert!(!degree_cascade_condition(&p).unwrap());
        assert_eq!(degree_cascade_probability(&p).unwrap(), 0.0);
        let f = degree_worst_case_distribution(&p).unwrap();
        assert_eq!(f.probs[9], 1.0);
    }

    #[test]
    fn fragile_nodes_cascade() {
        let p = point(3, 0.01);
        assert_eq!(rho(&p)[3], 1.0);
        assert!(degree_cascade_condition(&p).unwrap());
    }

    #[test]
    fn fragile_two_point_degrees_match_hand_iteration() {
        // degrees 1 and 4 with equal mass, every node fragile
        let p = DegreeModelParams {
            n: 20,
            degree_dist: vec![0.0, 0.5, 0.0, 0.0, 0.5],
            thresholds: vec![0.1],
            threshold_probs: vec![1.0],
        };
        assert!(degree_cascade_condition(&p).unwrap());
        // G1(s) = (0.5 + 2 s^3) / 2.5; smallest root of H = G1(H)
        let g1 = |s: f64| (0.5 + 2.0 * s.powi(3)) / 2.5;
        let mut h = 0.0;
        for _ in 0..10_000 {
            h = g1(h);
        }
        let g0h = 0.5 * h + 0.5 * h.powi(4);
        let want = 0.5 * (1.0 - g0h) + 0.5 * (1.0 - g0h.powi(4));
        let got = degree_cascade_probability(&p).unwrap();
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn uniform_thresholds_on_the_unit_interval_never_cascade() {
        let p = DegreeModelParams::with_uniform_thresholds(50, DegreeModelParams::poisson_degrees(3.0, 30), 0.0, 1.0, 1000);
        assert!(!degree_cascade_condition(&p).unwrap());
    }
}
