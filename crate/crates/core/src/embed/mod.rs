//! Survivable embedding of an expanded request onto a physical network as a
//! multi-commodity flow program, solved by relaxation and rounding.

mod network;
mod program;
mod solve;
mod validate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{ExpandedVInf, TopologyError, DEFAULT_SCENARIO_CAP};
use orpool_lp::LpError;

pub use network::{PhysicalLink, PhysicalNetwork, PhysicalNode, Reservation, Usage, Utilization, CAPACITY_TOL};
pub use program::{build_program, Commodity, CommodityKind, Program};
pub use solve::{solve_embedding, solve_embedding_with, solve_fixed};
pub use validate::{max_assignment_weight, validate, ValidationReport, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("invalid physical network: {0}")]
    InvalidNetwork(String),
    #[error("inconsistent problem: {0}")]
    Inconsistent(String),
    #[error("no feasible embedding: {0}")]
    Infeasible(String),
    #[error("solution fails validation: {0}")]
    Invalid(String),
    #[error("capacity exceeded on {0}")]
    Capacity(String),
    #[error("lease {0} is already applied")]
    DuplicateLease(u64),
    #[error("lease {0} is not applied")]
    UnknownLease(u64),
}

/// How L1 flows toward one neighbor may share reserved bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    /// Reserve the worst case over failure scenarios in which every failed
    /// critical node is taken over by a distinct backup.
    #[default]
    Assignment,
    /// One row per failure scenario summing the flows of every backup.
    AllBackups,
    /// No sharing: reserve the sum of all L1 flows.
    None,
}

/// An expanded request to be placed on (the available part of) a network.
/// Virtual nodes are numbered with the base nodes first and backups after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingProblem {
    pub physical: PhysicalNetwork,
    pub expanded: ExpandedVInf,
    /// Hosts each virtual node may not use.
    #[serde(default)]
    pub excluded: Vec<Vec<usize>>,
    /// When present for a virtual node, the only hosts it may use.
    #[serde(default)]
    pub preferred: Vec<Option<Vec<usize>>>,
    /// Critical nodes and backups must sit on distinct racks.
    #[serde(default)]
    pub rack_separation: bool,
    /// Fixed (virtual node, host) pairs.
    #[serde(default)]
    pub pinned: Vec<(usize, usize)>,
    /// Compute to reserve per backup when it differs from the expansion, e.g.
    /// a pooled backup whose host already holds enough.
    #[serde(default)]
    pub backup_compute: Option<f64>,
    /// Bandwidth to reserve per backup pair when it differs from the expansion;
    /// zero drops the backup-pair flows entirely.
    #[serde(default)]
    pub l2_demand: Option<f64>,
    #[serde(default)]
    pub overlap: OverlapMode,
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_cap")]
    pub scenario_cap: usize,
}

fn default_epsilon() -> f64 {
    1.0
}

fn default_cap() -> usize {
    DEFAULT_SCENARIO_CAP
}

impl EmbeddingProblem {
    pub fn new(physical: PhysicalNetwork, expanded: ExpandedVInf) -> Self {
        Self {
            physical,
            expanded,
            excluded: Vec::new(),
            preferred: Vec::new(),
            rack_separation: false,
            pinned: Vec::new(),
            backup_compute: None,
            l2_demand: None,
            overlap: OverlapMode::default(),
            alpha: None,
            beta: None,
            epsilon: default_epsilon(),
            scenario_cap: default_cap(),
        }
    }

    pub fn virtual_count(&self) -> usize {
        self.expanded.node_count()
    }

    pub fn base_count(&self) -> usize {
        self.expanded.base.nodes.len()
    }

    pub fn is_backup(&self, u: usize) -> bool {
        u >= self.base_count()
    }

    /// Virtual node subject to rack separation.
    pub fn is_protected(&self, u: usize) -> bool {
        self.is_backup(u) || self.expanded.base.nodes[u].critical
    }

    /// Compute demand of virtual node `u`.
    pub fn demand(&self, u: usize) -> f64 {
        if self.is_backup(u) {
            self.backup_compute.unwrap_or(self.expanded.backup_demand)
        } else {
            self.expanded.base.nodes[u].demand
        }
    }

    pub fn effective_l2_demand(&self) -> f64 {
        self.l2_demand.unwrap_or(self.expanded.l2_demand)
    }

    /// Whether `u` may be placed on `host` by exclusion, preference and pins.
    pub fn allowed(&self, u: usize, host: usize) -> bool {
        if self.excluded.get(u).is_some_and(|ex| ex.contains(&host)) {
            return false;
        }
        if let Some(Some(pref)) = self.preferred.get(u) {
            if !pref.contains(&host) {
                return false;
            }
        }
        match self.pinned.iter().find(|p| p.0 == u) {
            Some(&(_, h)) => h == host,
            None => true,
        }
    }

    pub fn alpha(&self, host: usize) -> f64 {
        match &self.alpha {
            Some(a) => a[host],
            None => 1.0 / (self.physical.nodes[host].compute + self.epsilon),
        }
    }

    pub fn beta(&self, link: usize) -> f64 {
        match &self.beta {
            Some(b) => b[link],
            None => 1.0 / (self.physical.links[link].bandwidth + self.epsilon),
        }
    }

    /// Rack labels of every host that has one.
    pub fn racks(&self) -> std::collections::BTreeMap<&str, Vec<usize>> {
        let mut racks = std::collections::BTreeMap::<&str, Vec<usize>>::new();
        for (i, n) in self.physical.nodes.iter().enumerate() {
            if let Some(r) = &n.rack {
                racks.entry(r.as_str()).or_default().push(i);
            }
        }
        racks
    }

    pub fn check(&self) -> Result<(), EmbedError> {
        self.physical.validate()?;
        self.expanded.base.validate()?;
        let nv = self.virtual_count();
        let np = self.physical.nodes.len();
        let mut hosts = std::collections::BTreeSet::new();
        let mut pinned = std::collections::BTreeSet::new();
        for &(u, h) in &self.pinned {
            if u >= nv || h >= np {
                return Err(EmbedError::Inconsistent(format!("pin ({u}, {h}) out of range")));
            }
            if !pinned.insert(u) {
                return Err(EmbedError::Inconsistent(format!("virtual node {u} pinned twice")));
            }
            if !hosts.insert(h) {
                return Err(EmbedError::Inconsistent(format!("host {h} pinned to two virtual nodes")));
            }
            if self.excluded.get(u).is_some_and(|ex| ex.contains(&h)) {
                return Err(EmbedError::Inconsistent(format!("virtual node {u} pinned to excluded host {h}")));
            }
        }
        for (u, pref) in self.preferred.iter().enumerate() {
            if let (Some(pref), Some(ex)) = (pref, self.excluded.get(u)) {
                if pref.iter().any(|h| ex.contains(h)) {
                    return Err(EmbedError::Inconsistent(format!(
                        "virtual node {u} prefers an excluded host"
                    )));
                }
            }
        }
        if self.excluded.len() > nv || self.preferred.len() > nv {
            return Err(EmbedError::Inconsistent("per-node lists longer than the node count".into()));
        }
        let links = self.physical.links.len();
        if self.alpha.as_ref().is_some_and(|a| a.len() != np) || self.beta.as_ref().is_some_and(|b| b.len() != links) {
            return Err(EmbedError::Inconsistent("weight vectors do not match the network".into()));
        }
        Ok(())
    }
}

/// One endpoint of an arc carrying flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Virtual(usize),
    Physical(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcFlow {
    pub from: Endpoint,
    pub to: Endpoint,
    pub value: f64,
}

/// Reserved bandwidth per arc for L1 flows toward one neighbor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReservation {
    pub neighbor: usize,
    pub arcs: Vec<ArcFlow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSolution {
    /// Host of every virtual node, base nodes first.
    pub node_map: Vec<usize>,
    pub edge_flows: Vec<Vec<ArcFlow>>,
    pub l1_flows: Vec<Vec<ArcFlow>>,
    pub overlap: Vec<OverlapReservation>,
    pub l2_flows: Vec<Vec<ArcFlow>>,
    /// Per-link bandwidth, primary for base edges and redundant for L1 and L2.
    pub link_bandwidth: Vec<Usage>,
    pub node_compute: Vec<Usage>,
    pub objective: f64,
}

impl EmbeddingSolution {
    pub fn reservation(&self) -> Reservation {
        Reservation {
            compute: self.node_compute.clone(),
            bandwidth: self.link_bandwidth.clone(),
        }
    }

    /// Bandwidth reserved on link `link` (both directions, all families).
    pub fn reserved_on(&self, link: usize) -> f64 {
        self.link_bandwidth.iter().filter(|u| u.index == link).map(Usage::total).sum()
    }

    pub fn redundant_bandwidth(&self) -> f64 {
        self.link_bandwidth.iter().map(|u| u.redundant).sum()
    }
}
