//! Virtual infrastructure requests and their expansion with backup nodes and
//! redundant links.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade::{
    degree_worst_case_distribution, load_based_distribution, tree_based_distribution, CascadeError, CascadeModel,
};
use crate::reliability::{independent_distribution, min_backups, FailureDistribution, ReliabilityError};

/// Default limit on the number of failure scenarios enumerated for one request.
pub const DEFAULT_SCENARIO_CAP: usize = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("{count} failure scenarios exceed the cap of {cap}")]
    ScenarioCap { count: u128, cap: usize },
    #[error(transparent)]
    Reliability(#[from] ReliabilityError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualNode {
    pub demand: f64,
    #[serde(default)]
    pub critical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualEdge {
    pub u: usize,
    pub v: usize,
    pub bandwidth: f64,
}

/// How the critical nodes of a request fail. `p` is the per-node failure
/// probability used for backups; `cascade`, when present, replaces the
/// independent failure distribution of the critical nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureSpec {
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cascade: Option<CascadeModel>,
}

impl FailureSpec {
    pub fn independent(p: f64) -> Self {
        Self { p, cascade: None }
    }

    /// Failure distribution over `n` critical nodes.
    pub fn distribution(&self, n: usize) -> Result<FailureDistribution, TopologyError> {
        let Some(model) = &self.cascade else {
            return Ok(independent_distribution(n, self.p));
        };
        if model.n() != n {
            return Err(TopologyError::Invalid(format!(
                "cascade model covers {} nodes but the request has {n} critical nodes",
                model.n()
            )));
        }
        Ok(match model {
            CascadeModel::Load(m) => load_based_distribution(m)?,
            CascadeModel::Tree(m) => tree_based_distribution(m)?,
            CascadeModel::Degree(m) => degree_worst_case_distribution(m)?,
        })
    }
}

/// A lease request: an undirected graph of virtual nodes with compute demands
/// and bandwidth-weighted edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VInfRequest {
    pub nodes: Vec<VirtualNode>,
    #[serde(default)]
    pub edges: Vec<VirtualEdge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureSpec>,
}

impl VInfRequest {
    pub fn validate(&self) -> Result<(), TopologyError> {
        let bad = |m: String| Err(TopologyError::Invalid(m));
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.demand.is_finite() || node.demand < 0.0 {
                return bad(format!("node {i} has invalid demand {}", node.demand));
            }
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            if e.u >= self.nodes.len() || e.v >= self.nodes.len() {
                return bad(format!("edge ({}, {}) references a missing node", e.u, e.v));
            }
            if e.u == e.v {
                return bad(format!("self-loop on node {}", e.u));
            }
            if !(e.bandwidth.is_finite() && e.bandwidth > 0.0) {
                return bad(format!("edge ({}, {}) has non-positive bandwidth", e.u, e.v));
            }
            if !seen.insert((e.u.min(e.v), e.u.max(e.v))) {
                return bad(format!("repeated edge ({}, {})", e.u, e.v));
            }
        }
        let has_critical = self.nodes.iter().any(|n| n.critical);
        match (has_critical, self.reliability) {
            (true, None) => return bad("critical nodes require a reliability target".into()),
            (false, Some(_)) => return bad("a reliability target requires critical nodes".into()),
            (true, Some(r)) if !(r > 0.0 && r < 1.0) => return bad(format!("reliability {r} outside (0, 1)")),
            _ => {}
        }
        if has_critical {
            let Some(f) = &self.failure else {
                return bad("critical nodes require a failure model".into());
            };
            if !(0.0..=1.0).contains(&f.p) {
                return bad(format!("failure probability {} outside [0, 1]", f.p));
            }
        }
        Ok(())
    }

    /// Indices of the critical nodes in ascending order.
    pub fn critical(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].critical).collect()
    }

    /// Neighbors of `u` with the bandwidth of the joining edge, ascending by neighbor.
    pub fn neighbors(&self, u: usize) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = self
            .edges
            .iter()
            .filter_map(|e| {
                if e.u == u {
                    Some((e.v, e.bandwidth))
                } else if e.v == u {
                    Some((e.u, e.bandwidth))
                } else {
                    None
                }
            })
            .collect();
        out.sort_by_key(|&(v, _)| v);
        out
    }

    /// Number of backups needed to meet the reliability target.
    pub fn backups_needed(&self) -> Result<usize, TopologyError> {
        let c = self.critical().len();
        let (Some(r), Some(f)) = (self.reliability, &self.failure) else {
            return Ok(0);
        };
        if c == 0 {
            return Ok(0);
        }
        let dist = f.distribution(c)?;
        Ok(min_backups(c, f.p, r, &dist)?)
    }

    pub fn total_demand(&self) -> f64 {
        self.nodes.iter().map(|n| n.demand).sum()
    }
}

/// Redundant link from backup `backup` toward `neighbor`, used when the backup
/// takes over critical node `critical`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Link {
    pub backup: usize,
    pub critical: usize,
    pub neighbor: usize,
    pub demand: f64,
}

/// A request together with `k` backup nodes and the redundant link sets.
/// Backups are numbered `0..k` separately from the base nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedVInf {
    pub base: VInfRequest,
    pub k: usize,
    pub backup_demand: f64,
    pub l1: Vec<L1Link>,
    pub l2: Vec<(usize, usize)>,
    pub l2_demand: f64,
}

/// Adds `k` backups that can replace any critical node.
pub fn expand(vinf: &VInfRequest, k: usize) -> Result<ExpandedVInf, TopologyError> {
    vinf.validate()?;
    let critical = vinf.critical();
    if k > 0 && critical.is_empty() {
        return Err(TopologyError::Invalid("backups requested for a request without critical nodes".into()));
    }
    if k == 0 {
        return Ok(ExpandedVInf {
            base: vinf.clone(),
            k: 0,
            backup_demand: 0.0,
            l1: Vec::new(),
            l2: Vec::new(),
            l2_demand: 0.0,
        });
    }
    let backup_demand = critical.iter().map(|&c| vinf.nodes[c].demand).fold(0.0, f64::max);
    let mut l1 = Vec::new();
    for backup in 0..k {
        for &c in &critical {
            for (neighbor, demand) in vinf.neighbors(c) {
                l1.push(L1Link {
                    backup,
                    critical: c,
                    neighbor,
                    demand,
                });
            }
        }
    }
    let l2_demand = vinf
        .edges
        .iter()
        .filter(|e| vinf.nodes[e.u].critical && vinf.nodes[e.v].critical)
        .map(|e| e.bandwidth)
        .fold(0.0, f64::max);
    let l2 = if l2_demand > 0.0 {
        (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect()
    } else {
        Vec::new()
    };
    Ok(ExpandedVInf {
        base: vinf.clone(),
        k,
        backup_demand,
        l1,
        l2,
        l2_demand,
    })
}

impl ExpandedVInf {
    /// Distinct (backup, neighbor) pairs joined by at least one L1 link.
    pub fn l1_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.l1.iter().map(|l| (l.backup, l.neighbor)).collect()
    }

    /// Distinct neighbors of critical nodes, ascending.
    pub fn l1_neighbors(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.l1.iter().map(|l| l.neighbor).collect();
        set.into_iter().collect()
    }

    /// Number of redundant links added to the base graph.
    pub fn redundant_link_count(&self) -> usize {
        self.l1_pairs().len() + self.l2.len()
    }

    /// Number of virtual nodes including backups.
    pub fn node_count(&self) -> usize {
        self.base.nodes.len() + self.k
    }
}

/// Number of non-empty critical subsets of size at most `k`, saturating.
pub fn scenario_count(critical: usize, k: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for size in 1..=k.min(critical) {
        binom = binom.saturating_mul((critical - size + 1) as u128) / size as u128;
        total = total.saturating_add(binom);
    }
    total
}

/// Failure scenarios: every set of at most `k` critical nodes, ordered by size
/// and then lexicographically.
pub fn scenario_set(expanded: &ExpandedVInf, cap: usize) -> Result<Vec<Vec<usize>>, TopologyError> {
    let critical = expanded.base.critical();
    let count = scenario_count(critical.len(), expanded.k);
    if count > cap as u128 {
        return Err(TopologyError::ScenarioCap { count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    for size in 1..=expanded.k.min(critical.len()) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.iter().map(|&i| critical[i]).collect());
            let Some(pos) = (0..size).rev().find(|&i| idx[i] < critical.len() - size + i) else {
                break;
            };
            idx[pos] += 1;
            for j in pos + 1..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> VInfRequest {
        VInfRequest {
            nodes: vec![
                VirtualNode { demand: 5.0, critical: true },
                VirtualNode { demand: 6.0, critical: true },
                VirtualNode { demand: 7.0, critical: true },
                VirtualNode { demand: 5.0, critical: false },
            ],
            edges: vec![
                VirtualEdge { u: 0, v: 1, bandwidth: 2.0 },
                VirtualEdge { u: 1, v: 2, bandwidth: 3.0 },
                VirtualEdge { u: 2, v: 3, bandwidth: 4.0 },
            ],
            reliability: Some(0.999),
            failure: Some(FailureSpec::independent(0.01)),
        }
    }

    #[test]
    fn rejects_self_loops_and_repeats() {
        let mut v = path();
        v.edges.push(VirtualEdge { u: 1, v: 1, bandwidth: 1.0 });
        assert!(v.validate().is_err());
        let mut v = path();
        v.edges.push(VirtualEdge { u: 1, v: 0, bandwidth: 1.0 });
        assert!(v.validate().is_err());
    }

    #[test]
    fn reliability_target_iff_critical() {
        let mut v = path();
        v.reliability = None;
        assert!(v.validate().is_err());
        let mut v = path();
        for n in &mut v.nodes {
            n.critical = false;
        }
        assert!(v.validate().is_err());
        v.reliability = None;
        v.validate().unwrap();
    }

    #[test]
    fn backup_demand_covers_every_critical_node() {
        let e = expand(&path(), 2).unwrap();
        assert_eq!(e.backup_demand, 7.0);
        assert_eq!(e.l2, vec![(0, 1)]);
        assert_eq!(e.l2_demand, 3.0);
    }

    #[test]
    fn scenario_order() {
        let e = expand(&path(), 2).unwrap();
        let s = scenario_set(&e, 100).unwrap();
        assert_eq!(s, vec![vec![0], vec![1], vec![2], vec![0, 1], vec![0, 2], vec![1, 2]]);
        assert!(matches!(scenario_set(&e, 5), Err(TopologyError::ScenarioCap { count: 6, .. })));
    }

    #[test]
    fn json_shape() {
        let text = r#"{"nodes":[{"demand":1.0,"critical":true},{"demand":2.0}],
            "edges":[{"u":0,"v":1,"bandwidth":1.5}],"reliability":0.99,"failure":{"p":0.01}}"#;
        let v: VInfRequest = serde_json::from_str(text).unwrap();
        v.validate().unwrap();
        assert_eq!(v.critical(), vec![0]);
        assert_eq!(v.backups_needed().unwrap(), expected_k(1, 0.01, 0.99));
    }

    fn expected_k(n: usize, p: f64, r: f64) -> usize {
        crate::reliability::min_backups_independent(n, p, r).unwrap()
    }
}
