use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EmbedError;

/// Slack allowed when checking a reservation against remaining capacity.
pub const CAPACITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalNode {
    pub compute: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rack: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalLink {
    pub u: usize,
    pub v: usize,
    pub bandwidth: f64,
}

/// Amount of one resource held by a lease, split into primary and redundant use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    pub index: usize,
    pub primary: f64,
    pub redundant: f64,
}

impl Usage {
    pub fn total(&self) -> f64 {
        self.primary + self.redundant
    }
}

/// Compute and bandwidth held by one lease.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Reservation {
    pub compute: Vec<Usage>,
    pub bandwidth: Vec<Usage>,
}

impl Reservation {
    pub fn is_empty(&self) -> bool {
        self.compute.is_empty() && self.bandwidth.is_empty()
    }
}

/// Totals of reserved resources across all leases.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Utilization {
    pub compute_primary: f64,
    pub compute_redundant: f64,
    pub bandwidth_primary: f64,
    pub bandwidth_redundant: f64,
}

/// Physical substrate with installed capacities and the leases drawn on them.
/// Remaining capacity is always recomputed from the installed capacity and
/// the live leases, so releasing every lease restores it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalNetwork {
    pub nodes: Vec<PhysicalNode>,
    pub links: Vec<PhysicalLink>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub leases: BTreeMap<u64, Reservation>,
}

impl PhysicalNetwork {
    pub fn new(nodes: Vec<PhysicalNode>, links: Vec<PhysicalLink>) -> Self {
        Self {
            nodes,
            links,
            leases: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: String| Err(EmbedError::InvalidNetwork(m));
        for (i, n) in self.nodes.iter().enumerate() {
            if !(n.compute.is_finite() && n.compute >= 0.0) {
                return bad(format!("node {i} has invalid compute {}", n.compute));
            }
        }
        let mut seen = BTreeSet::new();
        for (i, l) in self.links.iter().enumerate() {
            if l.u >= self.nodes.len() || l.v >= self.nodes.len() {
                return bad(format!("link {i} references a missing node"));
            }
            if l.u == l.v {
                return bad(format!("link {i} is a self-loop"));
            }
            if !(l.bandwidth.is_finite() && l.bandwidth >= 0.0) {
                return bad(format!("link {i} has invalid bandwidth {}", l.bandwidth));
            }
            if !seen.insert((l.u.min(l.v), l.u.max(l.v))) {
                return bad(format!("link {i} repeats ({}, {})", l.u, l.v));
            }
        }
        Ok(())
    }

    /// Compute and bandwidth held by live leases, per node and per link.
    fn used(&self) -> (Vec<f64>, Vec<f64>) {
        let mut compute = vec![0.0; self.nodes.len()];
        let mut bandwidth = vec![0.0; self.links.len()];
        for r in self.leases.values() {
            for u in &r.compute {
                compute[u.index] += u.total();
            }
            for u in &r.bandwidth {
                bandwidth[u.index] += u.total();
            }
        }
        (compute, bandwidth)
    }

    pub fn available_compute(&self) -> Vec<f64> {
        let (used, _) = self.used();
        self.nodes.iter().zip(used).map(|(n, u)| n.compute - u).collect()
    }

    pub fn available_bandwidth(&self) -> Vec<f64> {
        let (_, used) = self.used();
        self.links.iter().zip(used).map(|(l, u)| l.bandwidth - u).collect()
    }

    /// Lease-free copy whose capacities are what is still available.
    pub fn residual(&self) -> PhysicalNetwork {
        let (cu, bu) = self.used();
        PhysicalNetwork {
            nodes: self
                .nodes
                .iter()
                .zip(cu)
                .map(|(n, u)| PhysicalNode {
                    compute: (n.compute - u).max(0.0),
                    rack: n.rack.clone(),
                })
                .collect(),
            links: self
                .links
                .iter()
                .zip(bu)
                .map(|(l, u)| PhysicalLink {
                    bandwidth: (l.bandwidth - u).max(0.0),
                    ..*l
                })
                .collect(),
            leases: BTreeMap::new(),
        }
    }

    pub fn utilization(&self) -> Utilization {
        let mut out = Utilization::default();
        for r in self.leases.values() {
            for u in &r.compute {
                out.compute_primary += u.primary;
                out.compute_redundant += u.redundant;
            }
            for u in &r.bandwidth {
                out.bandwidth_primary += u.primary;
                out.bandwidth_redundant += u.redundant;
            }
        }
        out
    }

    pub fn total_compute(&self) -> f64 {
        self.nodes.iter().map(|n| n.compute).sum()
    }

    pub fn total_bandwidth(&self) -> f64 {
        self.links.iter().map(|l| l.bandwidth).sum()
    }

    /// Takes resources for lease `id`; fails without side effects if any
    /// node or link would be oversubscribed.
    pub fn apply(&mut self, id: u64, reservation: Reservation) -> Result<(), EmbedError> {
        if self.leases.contains_key(&id) {
            return Err(EmbedError::DuplicateLease(id));
        }
        let (cu, bu) = self.used();
        let mut extra_c = vec![0.0; self.nodes.len()];
        let mut extra_b = vec![0.0; self.links.len()];
        for u in &reservation.compute {
            if u.index >= self.nodes.len() {
                return Err(EmbedError::InvalidNetwork(format!("reservation names missing node {}", u.index)));
            }
            extra_c[u.index] += u.total();
        }
        for u in &reservation.bandwidth {
            if u.index >= self.links.len() {
                return Err(EmbedError::InvalidNetwork(format!("reservation names missing link {}", u.index)));
            }
            extra_b[u.index] += u.total();
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if extra_c[i] > 0.0 && cu[i] + extra_c[i] > n.compute + CAPACITY_TOL {
                return Err(EmbedError::Capacity(format!(
                    "node {i}: {} requested, {} available",
                    extra_c[i],
                    n.compute - cu[i]
                )));
            }
        }
        for (i, l) in self.links.iter().enumerate() {
            if extra_b[i] > 0.0 && bu[i] + extra_b[i] > l.bandwidth + CAPACITY_TOL {
                return Err(EmbedError::Capacity(format!(
                    "link {i}: {} requested, {} available",
                    extra_b[i],
                    l.bandwidth - bu[i]
                )));
            }
        }
        self.leases.insert(id, reservation);
        Ok(())
    }

    pub fn release(&mut self, id: u64) -> Result<Reservation, EmbedError> {
        self.leases.remove(&id).ok_or(EmbedError::UnknownLease(id))
    }
}
