use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{clamp_mass, CascadeError};
use crate::reliability::FailureDistribution;

/// Largest state space handled at all.
pub const MAX_STATES: usize = 1 << 20;
/// Up to this many states the stationary system is solved by dense LU.
pub const DENSE_STATES: usize = 2048;

/// Category-level CTMC with at most one node per category, a cyclic operating
/// environment, and cascade rates between categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModelParams {
    /// `cascade_rates[i][j]`: extra failure rate on category `j` while `i` is down.
    pub cascade_rates: Vec<Vec<f64>>,
    /// `fail_rates[i][e]`
    pub fail_rates: Vec<Vec<f64>>,
    /// `repair_rates[i][e]`
    pub repair_rates: Vec<Vec<f64>>,
    /// Rate of leaving environment `e` for `e + 1 (mod E)`.
    pub env_transition_rates: Vec<f64>,
}

impl TreeModelParams {
    pub fn n(&self) -> usize {
        self.fail_rates.len()
    }

    pub fn environments(&self) -> usize {
        self.env_transition_rates.len()
    }

    pub fn validate(&self) -> Result<(), CascadeError> {
        let (n, e) = (self.n(), self.environments());
        let bad = |m: &str| Err(CascadeError::InvalidParams(m.into()));
        if e == 0 {
            return bad("at least one environment is required");
        }
        if self.repair_rates.len() != n || self.cascade_rates.len() != n {
            return bad("per-category tables disagree on the category count");
        }
        if self.cascade_rates.iter().any(|row| row.len() != n) {
            return bad("cascade matrix must be n x n");
        }
        for rates in self.fail_rates.iter().chain(&self.repair_rates) {
            if rates.len() != e {
                return bad("per-environment rate tables must have one entry per environment");
            }
            if rates.iter().any(|r| !r.is_finite() || *r <= 0.0) {
                return bad("failure and repair rates must be positive and finite");
            }
        }
        let others = self.cascade_rates.iter().flatten().chain(&self.env_transition_rates);
        if others.clone().any(|r| !r.is_finite() || *r < 0.0) {
            return bad("cascade and environment rates must be non-negative and finite");
        }
        Ok(())
    }
}

/// Generator of the chain in sparse form; state index is `e * 2^n + bits`.
#[derive(Debug, Clone)]
pub struct TreeChain {
    pub n: usize,
    pub environments: usize,
    /// Outgoing transitions `(target, rate)` per state.
    pub out: Vec<Vec<(usize, f64)>>,
    /// Total exit rate per state.
    pub exit: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TreeSolution {
    pub pi: Vec<f64>,
    pub residual: f64,
    pub distribution: FailureDistribution,
}

impl TreeChain {
    pub fn build(params: &TreeModelParams) -> Result<Self, CascadeError> {
        params.validate()?;
        let (n, envs) = (params.n(), params.environments());
        let states = if n < 32 { envs.saturating_mul(1 << n) } else { usize::MAX };
        if states > MAX_STATES {
            return Err(CascadeError::TooLarge {
                states,
                limit: MAX_STATES,
            });
        }
        let width = 1usize << n;
        let mut out = vec![Vec::new(); states];
        for (s, edges) in out.iter_mut().enumerate() {
            let (e, bits) = (s / width, s % width);
            for j in 0..n {
                let down = bits >> j & 1 == 1;
                if down {
                    edges.push((e * width + (bits & !(1 << j)), params.repair_rates[j][e]));
                } else {
                    let cascade: f64 = (0..n)
                        .filter(|&i| bits >> i & 1 == 1)
                        .map(|i| params.cascade_rates[i][j])
                        .sum();
                    edges.push((e * width + (bits | 1 << j), params.fail_rates[j][e] + cascade));
                }
            }
            if envs > 1 && params.env_transition_rates[e] > 0.0 {
                edges.push((((e + 1) % envs) * width + bits, params.env_transition_rates[e]));
            }
        }
        let exit = out.iter().map(|edges| edges.iter().map(|&(_, r)| r).sum()).collect();
        Ok(Self {
            n,
            environments: envs,
            out,
            exit,
        })
    }

    pub fn states(&self) -> usize {
        self.out.len()
    }

    pub fn failed_count(&self, state: usize) -> usize {
        (state % (1 << self.n)).count_ones() as usize
    }

    /// True when every state reaches every other state.
    pub fn is_irreducible(&self) -> bool {
        let s = self.states();
        let mut rev = vec![Vec::new(); s];
        for (i, edges) in self.out.iter().enumerate() {
            for &(j, r) in edges {
                if r > 0.0 {
                    rev[j].push(i);
                }
            }
        }
        let reach_all = |adj: &dyn Fn(usize) -> Vec<usize>| {
            let mut seen = vec![false; s];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(u) = stack.pop() {
                for v in adj(u) {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            seen.iter().all(|&b| b)
        };
        let fwd = |u: usize| self.out[u].iter().filter(|&&(_, r)| r > 0.0).map(|&(v, _)| v).collect();
        let bwd = |u: usize| rev[u].clone();
        reach_all(&fwd) && reach_all(&bwd)
    }

    /// `max_j |(pi^T Q)_j|`
    pub fn residual(&self, pi: &[f64]) -> f64 {
        let mut flow: Vec<f64> = pi.iter().zip(&self.exit).map(|(p, q)| -p * q).collect();
        for (i, edges) in self.out.iter().enumerate() {
            for &(j, r) in edges {
                flow[j] += pi[i] * r;
            }
        }
        flow.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn stationary(&self) -> Result<Vec<f64>, CascadeError> {
        if !self.is_irreducible() {
            return Err(CascadeError::Singular);
        }
        if self.states() <= DENSE_STATES {
            self.stationary_dense()
        } else {
            self.stationary_iterative()
        }
    }

    /// LU on `Q^T` with its last row replaced by the normalization.
    fn stationary_dense(&self) -> Result<Vec<f64>, CascadeError> {
        let s = self.states();
        let mut a = DMatrix::<f64>::zeros(s, s);
        for (i, edges) in self.out.iter().enumerate() {
            a[(i, i)] -= self.exit[i];
            for &(j, r) in edges {
                a[(j, i)] += r;
            }
        }
        for i in 0..s {
            a[(s - 1, i)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(s);
        b[s - 1] = 1.0;
        let x = a.lu().solve(&b).ok_or(CascadeError::Singular)?;
        Ok(x.iter().map(|v| v.max(0.0)).collect())
    }

    /// Gauss-Seidel sweeps on the balance equations.
    fn stationary_iterative(&self) -> Result<Vec<f64>, CascadeError> {
        const MAX_SWEEPS: usize = 100_000;
        let s = self.states();
        let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); s];
        for (i, edges) in self.out.iter().enumerate() {
            for &(j, r) in edges {
                incoming[j].push((i, r));
            }
        }
        let mut pi = vec![1.0 / s as f64; s];
        for sweep in 0..MAX_SWEEPS {
            for j in 0..s {
                let inflow: f64 = incoming[j].iter().map(|&(i, r)| pi[i] * r).sum();
                pi[j] = inflow / self.exit[j];
            }
            let total: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|p| *p /= total);
            if sweep % 10 == 9 && self.residual(&pi) < 1e-12 {
                return Ok(pi);
            }
        }
        if self.residual(&pi) < 1e-8 {
            Ok(pi)
        } else {
            Err(CascadeError::NoConvergence(MAX_SWEEPS))
        }
    }

    pub fn solve(&self) -> Result<TreeSolution, CascadeError> {
        let pi = self.stationary()?;
        let residual = self.residual(&pi);
        let mut probs = vec![0.0; self.n + 1];
        for (s, p) in pi.iter().enumerate() {
            probs[self.failed_count(s)] += p;
        }
        for (x, m) in probs.iter_mut().enumerate() {
            *m = clamp_mass(x, *m)?;
        }
        Ok(TreeSolution {
            pi,
            residual,
            distribution: FailureDistribution { n: self.n, probs },
        })
    }
}

pub fn tree_based_distribution(params: &TreeModelParams) -> Result<FailureDistribution, CascadeError> {
    Ok(TreeChain::build(params)?.solve()?.distribution)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(lambda: f64, mu: f64) -> TreeModelParams {
        TreeModelParams {
            cascade_rates: vec![vec![0.0]],
            fail_rates: vec![vec![lambda]],
            repair_rates: vec![vec![mu]],
            env_transition_rates: vec![0.0],
        }
    }

    #[test]
    fn two_state_chain() {
        let f = tree_based_distribution(&single(1.0, 9.0)).unwrap();
        assert!((f.probs[0] - 0.9).abs() < 1e-12);
        assert!((f.probs[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn cascade_creates_positive_correlation() {
        let mut p = TreeModelParams {
            cascade_rates: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            fail_rates: vec![vec![1.0], vec![2.0]],
            repair_rates: vec![vec![5.0], vec![6.0]],
            env_transition_rates: vec![0.0],
        };
        let indep = tree_based_distribution(&p).unwrap();
        let product = (1.0 / 6.0) * (2.0 / 8.0);
        assert!((indep.probs[2] - product).abs() < 1e-12);
        p.cascade_rates[0][1] = 50.0;
        let coupled = tree_based_distribution(&p).unwrap();
        assert!(coupled.probs[2] > product);
    }

    #[test]
    fn stuck_environment_is_reducible() {
        let p = TreeModelParams {
            cascade_rates: vec![vec![0.0]],
            fail_rates: vec![vec![1.0, 1.0]],
            repair_rates: vec![vec![2.0, 2.0]],
            env_transition_rates: vec![1.0, 0.0],
        };
        assert_eq!(tree_based_distribution(&p), Err(CascadeError::Singular));
    }

    #[test]
    fn dense_and_iterative_agree() {
        let p = TreeModelParams {
            cascade_rates: vec![vec![0.0, 0.5, 0.1], vec![0.2, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
            fail_rates: vec![vec![0.3, 0.6], vec![0.2, 0.1], vec![0.5, 0.4]],
            repair_rates: vec![vec![2.0, 1.5], vec![3.0, 2.5], vec![1.0, 2.0]],
            env_transition_rates: vec![0.7, 0.4],
        };
        let chain = TreeChain::build(&p).unwrap();
        let a = chain.stationary_dense().unwrap();
        let b = chain.stationary_iterative().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!(chain.residual(&a) < 1e-12);
    }

    #[test]
    fn rejects_bad_rates() {
        let mut p = single(1.0, 1.0);
        p.repair_rates[0][0] = 0.0;
        assert!(tree_based_distribution(&p).is_err());
    }
}
