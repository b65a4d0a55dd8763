//! Backup sizing: reliability of `n` critical nodes protected by `k` shared
//! backups, and the search for the smallest `k` meeting a target.

use serde::{Deserialize, Serialize};
use statrs::function::{beta::checked_beta_reg, factorial::ln_binomial};
use thiserror::Error;

/// Absolute slack used when comparing an achieved reliability to its target.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReliabilityError {
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("invalid failure distribution: {0}")]
    InvalidDistribution(String),
    #[error("target {r} unreachable with at most {k_max} backups")]
    Infeasible { r: f64, k_max: usize },
}

/// pmf of the number of simultaneously failed critical nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureDistribution {
    pub n: usize,
    pub probs: Vec<f64>,
}

impl FailureDistribution {
    pub fn new(n: usize, probs: Vec<f64>) -> Result<Self, ReliabilityError> {
        let f = Self { n, probs };
        f.check()?;
        Ok(f)
    }

    pub fn point_mass(n: usize, x: usize) -> Self {
        let mut probs = vec![0.0; n + 1];
        probs[x.min(n)] = 1.0;
        Self { n, probs }
    }

    pub fn check(&self) -> Result<(), ReliabilityError> {
        if self.probs.len() != self.n + 1 {
            return Err(ReliabilityError::InvalidDistribution(format!(
                "length {} for n = {}",
                self.probs.len(),
                self.n
            )));
        }
        if let Some(p) = self.probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ReliabilityError::InvalidDistribution(format!("entry {p} outside [0,1]")));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ReliabilityError::InvalidDistribution(format!("mass sums to {total}")));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Binomial pmf `C(n,x) p^x (1-p)^(n-x)` evaluated in log space.
pub fn binomial_pmf(n: usize, x: usize, p: f64) -> f64 {
    if x > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if x == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if x == n { 1.0 } else { 0.0 };
    }
    let ln = ln_binomial(n as u64, x as u64) + x as f64 * p.ln() + (n - x) as f64 * (-p).ln_1p();
    ln.exp()
}

/// `cdf[j] = P(Binomial(k, p) <= j)` for `j = 0..=k`.
pub fn binomial_cdf_table(k: usize, p: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = (0..=k)
        .map(|j| {
            acc += binomial_pmf(k, j, p);
            acc.min(1.0)
        })
        .collect();
    cdf[k] = 1.0;
    cdf
}

/// `P(Binomial(n, p) <= m)` by direct summation.
pub fn binomial_cdf(n: usize, m: usize, p: f64) -> f64 {
    if m >= n {
        return 1.0;
    }
    (0..=m).map(|j| binomial_pmf(n, j, p)).sum::<f64>().min(1.0)
}

/// Regularized incomplete beta `I_q(a, b)`.
pub fn regularized_incomplete_beta(q: f64, a: u64, b: u64) -> Result<f64, ReliabilityError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(ReliabilityError::Domain(format!("q = {q} outside [0,1]")));
    }
    if a == 0 || b == 0 {
        return Err(ReliabilityError::Domain("shape parameters must be >= 1".into()));
    }
    checked_beta_reg(a as f64, b as f64, q).map_err(|e| ReliabilityError::Domain(e.to_string()))
}

/// Probability that at most `k` of the `n + k` i.i.d. nodes fail.
pub fn reliability_independent(n: usize, k: usize, p: f64) -> f64 {
    binomial_cdf(n + k, k, p)
}

pub fn independent_distribution(n: usize, p: f64) -> FailureDistribution {
    FailureDistribution {
        n,
        probs: (0..=n).map(|x| binomial_pmf(n, x, p)).collect(),
    }
}

/// r(k) for an arbitrary critical-failure pmf: `x` critical failures are
/// survivable when at most `k - x` of the `k` backups also fail.
pub fn reliability_general(k: usize, p: f64, f: &FailureDistribution) -> f64 {
    let cdf = binomial_cdf_table(k, p);
    f.probs
        .iter()
        .enumerate()
        .take(k + 1)
        .map(|(x, fx)| fx * cdf[k - x])
        .sum::<f64>()
        .min(1.0)
}

fn check_prob(name: &str, v: f64) -> Result<(), ReliabilityError> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(ReliabilityError::Domain(format!("{name} = {v} must lie in (0,1)")))
    }
}

/// Smallest total node count `K` such that `n` of them survive with
/// probability at least `r` when every one fails independently with `p`.
pub fn k_max(n: usize, p: f64, r: f64) -> Result<usize, ReliabilityError> {
    if n == 0 {
        return Err(ReliabilityError::Domain("n must be >= 1".into()));
    }
    check_prob("p", p)?;
    check_prob("r", r)?;
    let ok = |big_k: usize| binomial_cdf(big_k, big_k - n, p) >= r - PROB_TOL;
    if ok(n) {
        return Ok(n);
    }
    let (mut lo, mut step) = (n, 1usize);
    let hi = loop {
        let cand = n.checked_add(step).ok_or_else(|| ReliabilityError::Domain("k_max overflow".into()))?;
        if ok(cand) {
            break cand;
        }
        lo = cand;
        step = step.checked_mul(2).ok_or_else(|| ReliabilityError::Domain("k_max overflow".into()))?;
    };
    let mut hi = hi;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Smallest `k` with `reliability_general(k, p, f) >= r`, by binary search
/// over `[0, k_max(n, p, r)]`.
pub fn min_backups(n: usize, p: f64, r: f64, f: &FailureDistribution) -> Result<usize, ReliabilityError> {
    check_prob("p", p)?;
    check_prob("r", r)?;
    if f.n != n {
        return Err(ReliabilityError::InvalidDistribution(format!(
            "distribution covers {} nodes, query has {n}",
            f.n
        )));
    }
    f.check()?;
    if n == 0 {
        return Ok(0);
    }
    let hi_bound = k_max(n, p, r)?;
    let ok = |k: usize| reliability_general(k, p, f) >= r - PROB_TOL;
    if !ok(hi_bound) {
        return Err(ReliabilityError::Infeasible { r, k_max: hi_bound });
    }
    let (mut lo, mut hi) = (0usize, hi_bound);
    if ok(0) {
        return Ok(0);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Convenience wrapper for the independent failure model.
pub fn min_backups_independent(n: usize, p: f64, r: f64) -> Result<usize, ReliabilityError> {
    min_backups(n, p, r, &independent_distribution(n, p))
}
