//! Opportunistic redundancy pooling: an anchor VInf lends its backup slots to
//! member VInfs as long as its own guarantee still holds.

use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reliability::{
    binomial_cdf_table, binomial_pmf, min_backups, reliability_general, FailureDistribution, ReliabilityError, PROB_TOL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoolError {
    #[error("transform length {length} cannot hold a sum of up to {needed} lent slots")]
    Length { length: usize, needed: usize },
    #[error("no member with id `{0}`")]
    NotFound(String),
    #[error("a member with id `{0}` is already pooled")]
    Duplicate(String),
    #[error("pool invariant violated: {0}")]
    Invariant(String),
    #[error("spectral round-off {0:e} exceeds tolerance")]
    RoundOff(f64),
    #[error(transparent)]
    Reliability(#[from] ReliabilityError),
}

/// A VInf taking part in a pool, sized for its own guarantee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolMember {
    pub id: String,
    pub n: usize,
    pub k: usize,
    pub p: f64,
    pub r: f64,
    pub f: FailureDistribution,
}

impl PoolMember {
    /// Member with `k` set by `min_backups` for its own guarantee.
    pub fn sized(id: impl Into<String>, n: usize, p: f64, r: f64, f: FailureDistribution) -> Result<Self, PoolError> {
        let k = min_backups(n, p, r, &f)?;
        Ok(Self {
            id: id.into(),
            n,
            k,
            p,
            r,
            f,
        })
    }

    pub fn independent(id: impl Into<String>, n: usize, p: f64, r: f64) -> Result<Self, PoolError> {
        Self::sized(id, n, p, r, crate::reliability::independent_distribution(n, p))
    }

    pub fn standalone_reliability(&self) -> f64 {
        reliability_general(self.k, self.p, &self.f)
    }

    /// Checks that `k` is exactly the standalone requirement.
    pub fn validate(&self) -> Result<(), PoolError> {
        self.f.check()?;
        let want = min_backups(self.n, self.p, self.r, &self.f)?;
        if want != self.k {
            return Err(PoolError::Invariant(format!(
                "member `{}` holds k = {} but its guarantee needs {want}",
                self.id, self.k
            )));
        }
        Ok(())
    }
}

/// Probability that `y` of a VInf's `n` critical nodes and `k` backups are down.
pub fn z_vinf(k: usize, y: usize, n: usize, p: f64, f: &FailureDistribution) -> f64 {
    (0..=n.min(y))
        .filter(|&x| y - x <= k)
        .map(|x| binomial_pmf(k, y - x, p) * f.probs[x])
        .sum()
}

/// pmf of the number of lent slots a member has down or in use.
pub fn member_usage_pmf(m: &PoolMember) -> Vec<f64> {
    let mut q: Vec<f64> = (0..m.k).map(|y| z_vinf(m.k, y, m.n, m.p, &m.f)).collect();
    let head: f64 = q.iter().sum();
    q.push((1.0 - head).max(0.0));
    q
}

fn transform(pmf: &[f64], length: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = (0..length)
        .map(|i| Complex64::new(pmf.get(i).copied().unwrap_or(0.0), 0.0))
        .collect();
    planner.plan_fft_forward(length).process(&mut buf);
    buf
}

fn inverse(mut spectrum: Vec<Complex64>, planner: &mut FftPlanner<f64>) -> Result<Vec<f64>, PoolError> {
    let length = spectrum.len();
    planner.plan_fft_inverse(length).process(&mut spectrum);
    let raw: Vec<f64> = spectrum.iter().map(|c| c.re / length as f64).collect();
    let worst = raw.iter().map(|&v| (-v).max(v - 1.0)).fold(0.0, f64::max);
    if worst > 1e-9 {
        return Err(PoolError::RoundOff(worst));
    }
    Ok(raw.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// Distribution of the sum of independent member usages, by FFT of size `length`.
pub fn convolve_members(pmfs: &[Vec<f64>], length: usize) -> Result<Vec<f64>, PoolError> {
    let needed: usize = pmfs.iter().map(|q| q.len().saturating_sub(1)).sum();
    if length < needed + 1 {
        return Err(PoolError::Length { length, needed });
    }
    let mut planner = FftPlanner::new();
    let mut acc = vec![Complex64::new(1.0, 0.0); length];
    for q in pmfs {
        for (a, b) in acc.iter_mut().zip(transform(q, length, &mut planner)) {
            *a *= b;
        }
    }
    inverse(acc, &mut planner)
}

/// Anchor reliability given the lent-slot usage pmf `usage` and `lent` slots out.
fn anchor_reliability(anchor: &PoolMember, usage: &[f64], lent: usize) -> f64 {
    let k0 = anchor.k;
    let Some(kept) = k0.checked_sub(lent) else {
        return 0.0;
    };
    // P(Y <= m) for Y = failures among the anchor's critical nodes and kept backups
    let mut cdf = Vec::with_capacity(k0 + 1);
    let mut acc = 0.0;
    for y in 0..=k0 {
        acc += z_vinf(kept, y, anchor.n, anchor.p, &anchor.f);
        cdf.push(acc.min(1.0));
    }
    let loss: f64 = usage
        .iter()
        .take(lent + 1)
        .enumerate()
        .map(|(x, qx)| qx * (1.0 - cdf[k0 - x]))
        .sum();
    (1.0 - loss).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Slots,
    Reliability,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RejectReason::Slots => "slots",
            RejectReason::Reliability => "reliability",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Admission {
    Admitted { slots: Vec<usize>, r0: f64 },
    /// `r0` is the anchor reliability the pool would have had.
    Rejected { reason: RejectReason, r0: f64 },
}

impl Admission {
    pub fn is_admitted(&self) -> bool {
        matches!(self, Admission::Admitted { .. })
    }

    pub fn r0(&self) -> f64 {
        match self {
            Admission::Admitted { r0, .. } | Admission::Rejected { r0, .. } => *r0,
        }
    }
}

/// Anchor VInf-0, its members and the lending of its `k0` backup slots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackupPool {
    pub anchor: PoolMember,
    pub members: Vec<PoolMember>,
    /// Slot index to the id of the member it is lent to.
    pub assignment: Vec<Option<String>>,
    #[serde(skip)]
    spectra: Vec<Vec<Complex64>>,
    #[serde(skip)]
    length: usize,
}

impl PartialEq for BackupPool {
    fn eq(&self, other: &Self) -> bool {
        self.anchor == other.anchor && self.members == other.members && self.assignment == other.assignment
    }
}

impl BackupPool {
    pub fn new(anchor: PoolMember) -> Self {
        let k0 = anchor.k;
        let mut pool = Self {
            anchor,
            members: Vec::new(),
            assignment: vec![None; k0],
            spectra: Vec::new(),
            length: 0,
        };
        pool.rebuild_spectra();
        pool
    }

    fn base_length(&self) -> usize {
        (self.anchor.k + 1).next_power_of_two()
    }

    /// Recomputes cached member transforms, e.g. after deserialization.
    pub fn rebuild_spectra(&mut self) {
        let needed = self.lent() + 1;
        self.length = self.base_length().max(needed.next_power_of_two());
        let mut planner = FftPlanner::new();
        self.spectra = self
            .members
            .iter()
            .map(|m| transform(&member_usage_pmf(m), self.length, &mut planner))
            .collect();
    }

    pub fn transform_length(&self) -> usize {
        self.length
    }

    pub fn k0(&self) -> usize {
        self.anchor.k
    }

    pub fn lent(&self) -> usize {
        self.members.iter().map(|m| m.k).sum()
    }

    pub fn free_slots(&self) -> usize {
        self.assignment.iter().filter(|s| s.is_none()).count()
    }

    pub fn member(&self, id: &str) -> Option<&PoolMember> {
        self.members.iter().find(|m| m.id == id)
    }

    pub fn slots_of(&self, id: &str) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&s| self.assignment[s].as_deref() == Some(id))
            .collect()
    }

    fn usage(&self, extra: Option<&[Complex64]>) -> Result<Vec<f64>, PoolError> {
        if self.spectra.len() != self.members.len() {
            return Err(PoolError::Invariant("spectral cache out of date".into()));
        }
        let mut acc = vec![Complex64::new(1.0, 0.0); self.length];
        for s in self.spectra.iter().map(|s| s.as_slice()).chain(extra) {
            for (a, b) in acc.iter_mut().zip(s) {
                *a *= b;
            }
        }
        inverse(acc, &mut FftPlanner::new())
    }

    pub fn pooled_reliability(&self) -> Result<f64, PoolError> {
        Ok(anchor_reliability(&self.anchor, &self.usage(None)?, self.lent()))
    }

    /// Anchor reliability if `candidate` joined, without changing the pool.
    pub fn reliability_with(&self, candidate: &PoolMember) -> Result<f64, PoolError> {
        let lent = self.lent() + candidate.k;
        if lent > self.k0() {
            return Err(PoolError::Length {
                length: self.k0(),
                needed: lent,
            });
        }
        let spectrum = transform(&member_usage_pmf(candidate), self.length, &mut FftPlanner::new());
        Ok(anchor_reliability(&self.anchor, &self.usage(Some(&spectrum))?, lent))
    }

    pub fn admit(&mut self, candidate: PoolMember) -> Result<Admission, PoolError> {
        if candidate.id == self.anchor.id || self.member(&candidate.id).is_some() {
            return Err(PoolError::Duplicate(candidate.id));
        }
        if candidate.k > self.free_slots() {
            return Ok(Admission::Rejected {
                reason: RejectReason::Slots,
                r0: self.pooled_reliability()?,
            });
        }
        let spectrum = transform(&member_usage_pmf(&candidate), self.length, &mut FftPlanner::new());
        let r0 = anchor_reliability(&self.anchor, &self.usage(Some(&spectrum))?, self.lent() + candidate.k);
        if r0 < self.anchor.r - PROB_TOL {
            return Ok(Admission::Rejected {
                reason: RejectReason::Reliability,
                r0,
            });
        }
        let slots: Vec<usize> = (0..self.assignment.len())
            .filter(|&s| self.assignment[s].is_none())
            .take(candidate.k)
            .collect();
        for &s in &slots {
            self.assignment[s] = Some(candidate.id.clone());
        }
        self.members.push(candidate);
        self.spectra.push(spectrum);
        Ok(Admission::Admitted { slots, r0 })
    }

    pub fn remove(&mut self, id: &str) -> Result<PoolMember, PoolError> {
        let idx = self
            .members
            .iter()
            .position(|m| m.id == id)
            .ok_or_else(|| PoolError::NotFound(id.to_string()))?;
        for slot in self.assignment.iter_mut() {
            if slot.as_deref() == Some(id) {
                *slot = None;
            }
        }
        self.spectra.remove(idx);
        Ok(self.members.remove(idx))
    }

    /// Structural and reliability invariants of the pool.
    pub fn check_invariants(&self) -> Result<(), PoolError> {
        let bad = |m: String| Err(PoolError::Invariant(m));
        if self.assignment.len() != self.k0() {
            return bad(format!("{} slots recorded for k0 = {}", self.assignment.len(), self.k0()));
        }
        if self.lent() > self.k0() {
            return bad(format!("{} slots lent out of {}", self.lent(), self.k0()));
        }
        let mut ids = std::collections::HashSet::new();
        for m in &self.members {
            if !ids.insert(m.id.as_str()) || m.id == self.anchor.id {
                return bad(format!("duplicate member id `{}`", m.id));
            }
            let held = self.slots_of(&m.id).len();
            if held != m.k {
                return bad(format!("member `{}` holds {held} slots, needs {}", m.id, m.k));
            }
        }
        if let Some(orphan) = self.assignment.iter().flatten().find(|id| !ids.contains(id.as_str())) {
            return bad(format!("slot lent to unknown member `{orphan}`"));
        }
        let r0 = self.pooled_reliability()?;
        if r0 < self.anchor.r - PROB_TOL {
            return bad(format!("anchor reliability {r0} below its guarantee {}", self.anchor.r));
        }
        Ok(())
    }
}

/// Reference convolution by direct summation.
pub fn direct_convolution(pmfs: &[Vec<f64>]) -> Vec<f64> {
    pmfs.iter().fold(vec![1.0], |acc, q| {
        let mut out = vec![0.0; acc.len() + q.len() - 1];
        for (i, a) in acc.iter().enumerate() {
            for (j, b) in q.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        out
    })
}

/// Standalone reliability of the anchor with all `k0` slots, via the closed form.
pub fn standalone_anchor_reliability(anchor: &PoolMember) -> f64 {
    let cdf = binomial_cdf_table(anchor.k, anchor.p);
    anchor
        .f
        .probs
        .iter()
        .enumerate()
        .take(anchor.k + 1)
        .map(|(x, fx)| fx * cdf[anchor.k - x])
        .sum()
}
