//! Seeded slot-based simulation of VInf arrivals and departures on a random
//! substrate, comparing pooled backups, dedicated backups and no redundancy.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{
    solve_embedding, EmbedError, EmbeddingProblem, EmbeddingSolution, OverlapMode, PhysicalLink, PhysicalNetwork,
    PhysicalNode, Reservation, Usage, CAPACITY_TOL,
};
use crate::pooling::{Admission, BackupPool, PoolError, PoolMember};
use crate::topology::{expand, FailureSpec, TopologyError, VInfRequest, VirtualEdge, VirtualNode};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("invariant violated at slot {slot}: {message}")]
    Invariant { slot: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Pooled backups with overlap-aware redundant links.
    Share,
    /// Dedicated backups, every redundant link reserved in full.
    Noshare,
    /// No backups at all.
    Nonr,
}

impl Policy {
    pub const ALL: [Policy; 3] = [Policy::Nonr, Policy::Share, Policy::Noshare];

    pub fn name(self) -> &'static str {
        match self {
            Policy::Share => "share",
            Policy::Noshare => "noshare",
            Policy::Nonr => "nonr",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "share" => Ok(Policy::Share),
            "noshare" => Ok(Policy::Noshare),
            "nonr" => Ok(Policy::Nonr),
            other => Err(format!("unknown policy `{other}`")),
        }
    }
}

/// How the per-slot arrival rate turns into arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalModel {
    /// Geometric gaps between single arrivals, mean gap `1 / rate`.
    #[default]
    Geometric,
    /// Any number of arrivals per slot, geometric count with mean `rate`.
    Batch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub physical_nodes: usize,
    pub compute_range: (f64, f64),
    pub edge_probability: f64,
    pub bandwidth_range: (f64, f64),
    pub horizon: usize,
    pub arrival_rate: f64,
    pub arrival_model: ArrivalModel,
    pub departure_rate: f64,
    pub size_range: (usize, usize),
    pub demand_range: (f64, f64),
    pub critical_fraction: f64,
    pub virtual_edge_probability: f64,
    pub virtual_bandwidth: (f64, f64),
    pub failure_probability: f64,
    pub reliability: f64,
    pub policy: Policy,
    pub seed: u64,
    /// Keep running past the horizon, without arrivals, until every lease ends.
    pub drain: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            physical_nodes: 20,
            compute_range: (50.0, 100.0),
            edge_probability: 0.4,
            bandwidth_range: (50.0, 100.0),
            horizon: 200,
            arrival_rate: 0.75,
            arrival_model: ArrivalModel::Geometric,
            departure_rate: 0.01,
            size_range: (2, 10),
            demand_range: (5.0, 20.0),
            critical_fraction: 0.9,
            virtual_edge_probability: 0.4,
            virtual_bandwidth: (10.0, 35.0),
            failure_probability: 0.01,
            reliability: 0.9999,
            policy: Policy::Share,
            seed: 0,
            drain: false,
        }
    }
}

impl ScenarioConfig {
    /// The full evaluation scale: 40 hosts over 800 slots.
    pub fn full_scale() -> Self {
        Self {
            physical_nodes: 40,
            horizon: 800,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        let range = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 <= r.1;
        if self.physical_nodes == 0 {
            return bad("physical network needs at least one node");
        }
        if !range(self.compute_range) || self.compute_range.0 < 0.0 {
            return bad("compute range is empty or negative");
        }
        if !range(self.bandwidth_range) || self.bandwidth_range.0 <= 0.0 {
            return bad("link bandwidth range is empty or not positive");
        }
        if !range(self.demand_range) || self.demand_range.0 < 0.0 {
            return bad("demand range is empty or negative");
        }
        if !range(self.virtual_bandwidth) || self.virtual_bandwidth.0 <= 0.0 {
            return bad("virtual bandwidth range is empty or not positive");
        }
        if self.size_range.0 == 0 || self.size_range.0 > self.size_range.1 {
            return bad("VInf size range is empty");
        }
        for (name, p) in [
            ("edge probability", self.edge_probability),
            ("virtual edge probability", self.virtual_edge_probability),
            ("critical fraction", self.critical_fraction),
            ("arrival rate", self.arrival_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::Config(format!("{name} {p} outside [0, 1]")));
            }
        }
        if !(self.departure_rate > 0.0 && self.departure_rate <= 1.0) {
            return bad("departure rate must lie in (0, 1]");
        }
        if !(self.failure_probability > 0.0 && self.failure_probability < 1.0) {
            return bad("failure probability must lie in (0, 1)");
        }
        if !(self.reliability > 0.0 && self.reliability < 1.0) {
            return bad("reliability must lie in (0, 1)");
        }
        Ok(())
    }
}

const STREAM_PHYSICAL: u64 = 1;
const STREAM_ARRIVALS: u64 = 2;
const STREAM_REQUESTS: u64 = 3;
const STREAM_LEASES: u64 = 4;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent generator for one named use of the master seed.
fn substream(seed: u64, stream: u64, a: u64, b: u64) -> ChaCha8Rng {
    let key = splitmix(splitmix(splitmix(seed) ^ stream) ^ a).wrapping_add(splitmix(b));
    ChaCha8Rng::seed_from_u64(key)
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.random_range(range.0..range.1)
    }
}

pub fn generate_physical(config: &ScenarioConfig, seed: u64) -> PhysicalNetwork {
    let mut rng = substream(seed, STREAM_PHYSICAL, 0, 0);
    let nodes = (0..config.physical_nodes)
        .map(|_| PhysicalNode {
            compute: uniform(&mut rng, config.compute_range),
            rack: None,
        })
        .collect();
    let mut links = Vec::new();
    for u in 0..config.physical_nodes {
        for v in u + 1..config.physical_nodes {
            if rng.random_bool(config.edge_probability) {
                links.push(PhysicalLink {
                    u,
                    v,
                    bandwidth: uniform(&mut rng, config.bandwidth_range),
                });
            }
        }
    }
    PhysicalNetwork::new(nodes, links)
}

/// The first request arriving at `slot`.
pub fn generate_request(config: &ScenarioConfig, seed: u64, slot: usize) -> VInfRequest {
    request_at(config, seed, slot, 0)
}

/// The `index`-th request arriving at `slot`.
pub fn request_at(config: &ScenarioConfig, seed: u64, slot: usize, index: usize) -> VInfRequest {
    let mut rng = substream(seed, STREAM_REQUESTS, slot as u64, index as u64);
    let n = rng.random_range(config.size_range.0..=config.size_range.1);
    let cap = (config.critical_fraction * n as f64 + 1e-9).floor() as usize;
    let c = rng.random_range(0..=cap.min(n));
    let mut nodes: Vec<VirtualNode> = (0..n)
        .map(|_| VirtualNode {
            demand: uniform(&mut rng, config.demand_range),
            critical: false,
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for &i in &order[..c] {
        nodes[i].critical = true;
    }
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(config.virtual_edge_probability) {
                edges.push(VirtualEdge {
                    u,
                    v,
                    bandwidth: uniform(&mut rng, config.virtual_bandwidth),
                });
            }
        }
    }
    VInfRequest {
        nodes,
        edges,
        reliability: (c > 0).then_some(config.reliability),
        failure: Some(FailureSpec::independent(config.failure_probability)),
    }
}

/// Arrivals and rejections of one request size, split by whether it had critical nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionBucket {
    pub size: usize,
    pub critical: bool,
    pub arrivals: u64,
    pub rejected: u64,
}

impl RejectionBucket {
    pub fn rate(&self) -> f64 {
        if self.arrivals == 0 {
            0.0
        } else {
            self.rejected as f64 / self.arrivals as f64
        }
    }
}

/// Per-slot metrics of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsSeries {
    /// Accepted over arrived so far.
    pub acceptance: Vec<f64>,
    /// Live VInfs.
    pub admitted: Vec<f64>,
    pub cpu_primary: Vec<f64>,
    pub cpu_redundant: Vec<f64>,
    pub bw_primary: Vec<f64>,
    pub bw_redundant: Vec<f64>,
    /// Live backup nodes.
    pub backups: Vec<f64>,
    /// Redundant compute per live VInf.
    pub redundant_cpu_per_vinf: Vec<f64>,
    pub rejection: Vec<RejectionBucket>,
    pub arrivals: u64,
    pub accepted: u64,
}

impl MetricsSeries {
    pub const METRICS: [&'static str; 8] = [
        "acceptance",
        "admitted",
        "cpu_primary",
        "cpu_redundant",
        "bw_primary",
        "bw_redundant",
        "backups",
        "redundant_cpu_per_vinf",
    ];

    pub fn series(&self, metric: &str) -> Option<&[f64]> {
        Some(match metric {
            "acceptance" => &self.acceptance,
            "admitted" => &self.admitted,
            "cpu_primary" => &self.cpu_primary,
            "cpu_redundant" => &self.cpu_redundant,
            "bw_primary" => &self.bw_primary,
            "bw_redundant" => &self.bw_redundant,
            "backups" => &self.backups,
            "redundant_cpu_per_vinf" => &self.redundant_cpu_per_vinf,
            _ => return None,
        })
    }

    /// One number per run: the final acceptance rate, otherwise the mean over slots.
    pub fn summary(&self, metric: &str) -> Option<f64> {
        let s = self.series(metric)?;
        if metric == "acceptance" {
            return Some(self.acceptance_rate());
        }
        Some(if s.is_empty() { 0.0 } else { s.iter().sum::<f64>() / s.len() as f64 })
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.arrivals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.arrivals as f64
        }
    }

    pub fn slots(&self) -> usize {
        self.acceptance.len()
    }

    pub fn series_csv(&self, metric: &str) -> Option<String> {
        let s = self.series(metric)?;
        let mut out = String::from("slot,value\n");
        for (t, v) in s.iter().enumerate() {
            out.push_str(&format!("{t},{v}\n"));
        }
        Some(out)
    }

    pub fn rejection_csv(&self) -> String {
        let mut out = String::from("size,critical,arrivals,rejected,rate\n");
        for b in &self.rejection {
            out.push_str(&format!("{},{},{},{},{}\n", b.size, b.critical, b.arrivals, b.rejected, b.rate()));
        }
        out
    }
}

/// Backup slots an anchor lends out, with the substrate state behind them.
#[derive(Debug, Clone)]
struct PoolState {
    pool: BackupPool,
    anchor: u64,
    slot_hosts: Vec<usize>,
    slot_compute: f64,
    slot_leases: Vec<u64>,
    l2_reserved: f64,
}

#[derive(Debug, Clone)]
struct Tenant {
    leases: Vec<u64>,
    pool: Option<u64>,
    base_hosts: Vec<usize>,
    backups: usize,
    ends: usize,
}

/// Embedding of one request ready to be committed.
struct Placement {
    solution: EmbeddingSolution,
    compute: Vec<Usage>,
}

struct Simulator<'a> {
    config: &'a ScenarioConfig,
    net: PhysicalNetwork,
    total_compute: f64,
    total_bandwidth: f64,
    tenants: BTreeMap<u64, Tenant>,
    pools: BTreeMap<u64, PoolState>,
    next_id: u64,
    next_lease: u64,
    metrics: MetricsSeries,
    profile: BTreeMap<(usize, bool), (u64, u64)>,
}

impl<'a> Simulator<'a> {
    fn new(config: &'a ScenarioConfig) -> Self {
        let net = generate_physical(config, config.seed);
        let total_compute = net.total_compute();
        let total_bandwidth = net.total_bandwidth();
        let mut profile = BTreeMap::new();
        for size in config.size_range.0..=config.size_range.1 {
            profile.insert((size, false), (0, 0));
            profile.insert((size, true), (0, 0));
        }
        Self {
            config,
            net,
            total_compute,
            total_bandwidth,
            tenants: BTreeMap::new(),
            pools: BTreeMap::new(),
            next_id: 0,
            next_lease: 0,
            metrics: MetricsSeries::default(),
            profile,
        }
    }

    fn lease(&mut self, reservation: Reservation) -> Result<u64, SimError> {
        let id = self.next_lease;
        self.next_lease += 1;
        self.net.apply(id, reservation)?;
        Ok(id)
    }

    fn arrive(&mut self, request: VInfRequest, ends: usize) -> Result<(), SimError> {
        let size = request.nodes.len();
        let critical = request.nodes.iter().any(|n| n.critical);
        let id = self.next_id;
        self.next_id += 1;
        let accepted = match self.config.policy {
            Policy::Nonr => self.standalone(id, &request, 0, OverlapMode::Assignment, ends)?,
            Policy::Noshare => {
                let k = request.backups_needed()?;
                self.standalone(id, &request, k, OverlapMode::None, ends)?
            }
            Policy::Share => self.share(id, &request, ends)?,
        };
        self.metrics.arrivals += 1;
        let bucket = self.profile.entry((size, critical)).or_insert((0, 0));
        bucket.0 += 1;
        if accepted {
            self.metrics.accepted += 1;
        } else {
            bucket.1 += 1;
        }
        Ok(())
    }

    /// Solves an embedding; infeasibility of any kind is a rejection.
    fn place(&self, problem: &EmbeddingProblem) -> Result<Option<EmbeddingSolution>, SimError> {
        let free = self.net.available_compute();
        let smallest = (0..problem.virtual_count())
            .map(|u| problem.demand(u))
            .fold(f64::INFINITY, f64::min);
        let hosts = free.iter().filter(|&&c| c + CAPACITY_TOL >= smallest).count();
        if hosts < problem.virtual_count() {
            return Ok(None);
        }
        match solve_embedding(problem) {
            Ok(s) => Ok(Some(s)),
            Err(EmbedError::Infeasible(_) | EmbedError::Invalid(_) | EmbedError::Lp(_)) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn standalone(
        &mut self,
        id: u64,
        request: &VInfRequest,
        k: usize,
        overlap: OverlapMode,
        ends: usize,
    ) -> Result<bool, SimError> {
        let expanded = expand(request, k)?;
        let mut problem = EmbeddingProblem::new(self.net.residual(), expanded);
        problem.overlap = overlap;
        let Some(solution) = self.place(&problem)? else {
            return Ok(false);
        };
        let compute = solution.node_compute.clone();
        self.commit_standalone(id, request.nodes.len(), k, Placement { solution, compute }, ends)?;
        Ok(true)
    }

    fn commit_standalone(&mut self, id: u64, nb: usize, k: usize, placed: Placement, ends: usize) -> Result<(), SimError> {
        let reservation = Reservation {
            compute: placed.compute,
            bandwidth: placed.solution.link_bandwidth.clone(),
        };
        let lease = self.lease(reservation)?;
        self.tenants.insert(
            id,
            Tenant {
                leases: vec![lease],
                pool: None,
                base_hosts: placed.solution.node_map[..nb].to_vec(),
                backups: k,
                ends,
            },
        );
        Ok(())
    }

    fn share(&mut self, id: u64, request: &VInfRequest, ends: usize) -> Result<bool, SimError> {
        let k = request.backups_needed()?;
        if k == 0 {
            return self.standalone(id, request, 0, OverlapMode::Assignment, ends);
        }
        let c = request.critical().len();
        let p = self.config.failure_probability;
        let candidate = PoolMember::independent(id.to_string(), c, p, self.config.reliability)?;
        let mut order: Vec<(usize, u64)> = self.pools.iter().map(|(&pid, s)| (s.pool.free_slots(), pid)).collect();
        order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for (_, pid) in order {
            let mut trial = self.pools[&pid].pool.clone();
            if let Admission::Admitted { slots, .. } = trial.admit(candidate.clone())? {
                if self.join(id, request, k, pid, trial, &slots, ends)? {
                    return Ok(true);
                }
                break;
            }
        }
        self.found(id, request, k, candidate, ends)
    }

    /// Embeds `request` with its backups pinned to the pool slots it was granted.
    #[allow(clippy::too_many_arguments)]
    fn join(
        &mut self,
        id: u64,
        request: &VInfRequest,
        k: usize,
        pid: u64,
        trial: BackupPool,
        slots: &[usize],
        ends: usize,
    ) -> Result<bool, SimError> {
        let state = &self.pools[&pid];
        let expanded = expand(request, k)?;
        let nb = request.nodes.len();
        let deficit = (expanded.backup_demand - state.slot_compute).max(0.0);
        let l2_excess = (expanded.l2_demand - state.l2_reserved).max(0.0);
        // Hosts of every VInf already drawing on these backups.
        let mut taken: Vec<usize> = self.tenants[&state.anchor].base_hosts.clone();
        for m in &state.pool.members {
            let mid: u64 = m.id.parse().expect("member ids are tenant ids");
            taken.extend(&self.tenants[&mid].base_hosts);
        }
        taken.extend(&state.slot_hosts);
        taken.sort_unstable();
        taken.dedup();
        let mut problem = EmbeddingProblem::new(self.net.residual(), expanded);
        problem.pinned = slots.iter().enumerate().map(|(i, &s)| (nb + i, state.slot_hosts[s])).collect();
        problem.excluded = vec![taken; nb];
        problem.backup_compute = Some(deficit);
        problem.l2_demand = Some(l2_excess);
        let Some(solution) = self.place(&problem)? else {
            return Ok(false);
        };
        let compute = solution
            .node_compute
            .iter()
            .copied()
            .filter(|u| u.primary > 0.0 || u.redundant > 0.0)
            .collect();
        let lease = self.lease(Reservation {
            compute,
            bandwidth: solution.link_bandwidth.clone(),
        })?;
        self.tenants.insert(
            id,
            Tenant {
                leases: vec![lease],
                pool: Some(pid),
                base_hosts: solution.node_map[..nb].to_vec(),
                backups: 0,
                ends,
            },
        );
        self.pools.get_mut(&pid).expect("pool exists").pool = trial;
        Ok(true)
    }

    /// Embeds `request` with its own backups and opens a pool on them.
    fn found(&mut self, id: u64, request: &VInfRequest, k: usize, anchor: PoolMember, ends: usize) -> Result<bool, SimError> {
        let expanded = expand(request, k)?;
        let nb = request.nodes.len();
        let slot_compute = expanded.backup_demand;
        let l2_reserved = if expanded.l2.is_empty() { 0.0 } else { expanded.l2_demand };
        let problem = EmbeddingProblem::new(self.net.residual(), expanded);
        let Some(solution) = self.place(&problem)? else {
            return Ok(false);
        };
        let slot_hosts = solution.node_map[nb..].to_vec();
        // Backup compute lives in the slot leases, so the core lease keeps only primaries.
        let core: Vec<Usage> = solution
            .node_compute
            .iter()
            .filter(|u| u.primary > 0.0)
            .map(|u| Usage { redundant: 0.0, ..*u })
            .collect();
        let lease = self.lease(Reservation {
            compute: core,
            bandwidth: solution.link_bandwidth.clone(),
        })?;
        let mut slot_leases = Vec::with_capacity(k);
        for &h in &slot_hosts {
            let reservation = Reservation {
                compute: if slot_compute > 0.0 {
                    vec![Usage {
                        index: h,
                        primary: 0.0,
                        redundant: slot_compute,
                    }]
                } else {
                    Vec::new()
                },
                bandwidth: Vec::new(),
            };
            slot_leases.push(self.lease(reservation)?);
        }
        self.pools.insert(
            id,
            PoolState {
                pool: BackupPool::new(anchor),
                anchor: id,
                slot_hosts,
                slot_compute,
                slot_leases,
                l2_reserved,
            },
        );
        self.tenants.insert(
            id,
            Tenant {
                leases: vec![lease],
                pool: Some(id),
                base_hosts: solution.node_map[..nb].to_vec(),
                backups: k,
                ends,
            },
        );
        Ok(true)
    }

    fn depart(&mut self, id: u64) -> Result<(), SimError> {
        let tenant = self.tenants.remove(&id).expect("departing tenant is live");
        for lease in &tenant.leases {
            self.net.release(*lease)?;
        }
        let Some(pid) = tenant.pool else {
            return Ok(());
        };
        if pid != id {
            self.pools.get_mut(&pid).expect("pool exists").pool.remove(&id.to_string())?;
            return Ok(());
        }
        // The anchor leaves: members keep the slots they hold, the rest is freed.
        let state = self.pools.remove(&pid).expect("pool exists");
        for (s, lease) in state.slot_leases.into_iter().enumerate() {
            match &state.pool.assignment[s] {
                Some(member) => {
                    let mid: u64 = member.parse().expect("member ids are tenant ids");
                    let m = self.tenants.get_mut(&mid).expect("member is live");
                    m.leases.push(lease);
                    m.backups += 1;
                    m.pool = None;
                }
                None => {
                    self.net.release(lease)?;
                }
            }
        }
        Ok(())
    }

    fn sample(&mut self, slot: usize) -> Result<(), SimError> {
        let u = self.net.utilization();
        let live = self.tenants.len() as f64;
        let m = &mut self.metrics;
        m.acceptance.push(m.acceptance_rate());
        m.admitted.push(live);
        let frac = |x: f64, total: f64| if total > 0.0 { x / total } else { 0.0 };
        m.cpu_primary.push(frac(u.compute_primary, self.total_compute));
        m.cpu_redundant.push(frac(u.compute_redundant, self.total_compute));
        m.bw_primary.push(frac(u.bandwidth_primary, self.total_bandwidth));
        m.bw_redundant.push(frac(u.bandwidth_redundant, self.total_bandwidth));
        m.backups.push(self.tenants.values().map(|t| t.backups).sum::<usize>() as f64);
        m.redundant_cpu_per_vinf.push(if live > 0.0 { u.compute_redundant / live } else { 0.0 });
        self.check(slot)
    }

    fn check(&self, slot: usize) -> Result<(), SimError> {
        let fail = |message: String| Err(SimError::Invariant { slot, message });
        for (h, c) in self.net.available_compute().into_iter().enumerate() {
            if c < -CAPACITY_TOL {
                return fail(format!("host {h} over-committed by {}", -c));
            }
        }
        for (e, b) in self.net.available_bandwidth().into_iter().enumerate() {
            if b < -CAPACITY_TOL {
                return fail(format!("link {e} over-committed by {}", -b));
            }
        }
        for (pid, state) in &self.pools {
            if let Err(e) = state.pool.check_invariants() {
                return fail(format!("pool {pid}: {e}"));
            }
        }
        Ok(())
    }

    fn finish(mut self) -> MetricsSeries {
        self.metrics.rejection = self
            .profile
            .iter()
            .map(|(&(size, critical), &(arrivals, rejected))| RejectionBucket {
                size,
                critical,
                arrivals,
                rejected,
            })
            .collect();
        self.metrics
    }
}

fn geometric(rate: f64) -> Geometric {
    Geometric::new(rate).expect("rate checked by validate")
}

/// Runs one seeded scenario and returns its per-slot metrics.
pub fn run(config: &ScenarioConfig) -> Result<MetricsSeries, SimError> {
    Ok(simulate(config)?.0)
}

/// Like [`run`], also returning the substrate as it stands at the end.
pub fn simulate(config: &ScenarioConfig) -> Result<(MetricsSeries, PhysicalNetwork), SimError> {
    config.validate()?;
    let mut sim = Simulator::new(config);
    let mut arrivals = substream(config.seed, STREAM_ARRIVALS, 0, 0);
    let mut leases = substream(config.seed, STREAM_LEASES, 0, 0);
    let lease_len = geometric(config.departure_rate);
    let mut next_arrival = match (config.arrival_model, config.arrival_rate > 0.0) {
        (ArrivalModel::Geometric, true) => Some(geometric(config.arrival_rate).sample(&mut arrivals) as usize),
        _ => None,
    };
    let mut slot = 0;
    while slot < config.horizon || (config.drain && !sim.tenants.is_empty()) {
        let leaving: Vec<u64> = sim.tenants.iter().filter(|(_, t)| t.ends <= slot).map(|(&id, _)| id).collect();
        for id in leaving {
            sim.depart(id)?;
        }
        if slot < config.horizon {
            let count = match config.arrival_model {
                ArrivalModel::Geometric => {
                    let mut n = 0;
                    while next_arrival == Some(slot) {
                        n += 1;
                        let gap = 1 + geometric(config.arrival_rate).sample(&mut arrivals) as usize;
                        next_arrival = Some(slot + gap);
                    }
                    n
                }
                ArrivalModel::Batch if config.arrival_rate > 0.0 => {
                    // Failures before a success with probability 1/(1+rate) have mean `rate`.
                    geometric(1.0 / (1.0 + config.arrival_rate)).sample(&mut arrivals) as usize
                }
                ArrivalModel::Batch => 0,
            };
            for i in 0..count {
                let request = request_at(config, config.seed, slot, i);
                let ends = slot + 1 + lease_len.sample(&mut leases) as usize;
                sim.arrive(request, ends)?;
            }
        }
        sim.sample(slot)?;
        slot += 1;
    }
    let net = sim.net.clone();
    Ok((sim.finish(), net))
}

/// Scenario parameter varied across the cells of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    #[default]
    None,
    MaxBandwidth,
    Reliability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyGrid {
    pub base: ScenarioConfig,
    pub policies: Vec<Policy>,
    #[serde(default)]
    pub sweep: SweepParam,
    /// Sweep points; ignored when `sweep` is `None`.
    #[serde(default)]
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl PolicyGrid {
    pub fn single(config: ScenarioConfig) -> Self {
        Self {
            policies: vec![config.policy],
            seeds: vec![config.seed],
            base: config,
            sweep: SweepParam::None,
            values: Vec::new(),
        }
    }

    fn points(&self) -> Vec<Option<f64>> {
        match self.sweep {
            SweepParam::None => vec![None],
            _ => self.values.iter().copied().map(Some).collect(),
        }
    }

    /// Configuration of one cell.
    pub fn config(&self, policy: Policy, value: Option<f64>, seed: u64) -> ScenarioConfig {
        let mut c = self.base.clone();
        c.policy = policy;
        c.seed = seed;
        match (self.sweep, value) {
            (SweepParam::MaxBandwidth, Some(v)) => c.virtual_bandwidth.1 = v,
            (SweepParam::Reliability, Some(v)) => c.reliability = v,
            _ => {}
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRun {
    pub policy: Policy,
    pub value: Option<f64>,
    pub seed: u64,
    pub metrics: MetricsSeries,
}

impl CellRun {
    /// Label of the sweep point, `base` when nothing is swept.
    pub fn cell(&self) -> String {
        cell_label(self.value)
    }
}

fn cell_label(value: Option<f64>) -> String {
    value.map_or_else(|| "base".to_string(), |v| format!("{v}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub cell: String,
    pub policy: Policy,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<CellRun>,
    pub aggregate: Vec<AggregateRow>,
}

/// Sample mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs every (policy, sweep point, seed) cell, in parallel on the current rayon pool.
pub fn compare_policies(grid: &PolicyGrid) -> Result<Report, SimError> {
    if grid.policies.is_empty() || grid.seeds.is_empty() || grid.points().is_empty() {
        return Err(SimError::Config("grid has no cells".into()));
    }
    let mut cells = Vec::new();
    for value in grid.points() {
        for &policy in &grid.policies {
            for &seed in &grid.seeds {
                cells.push((policy, value, seed));
            }
        }
    }
    let runs = cells
        .par_iter()
        .map(|&(policy, value, seed)| {
            run(&grid.config(policy, value, seed)).map(|metrics| CellRun {
                policy,
                value,
                seed,
                metrics,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut aggregate = Vec::new();
    for value in grid.points() {
        for &policy in &grid.policies {
            for metric in MetricsSeries::METRICS {
                let xs: Vec<f64> = runs
                    .iter()
                    .filter(|r| r.policy == policy && r.value == value)
                    .filter_map(|r| r.metrics.summary(metric))
                    .collect();
                let (mean, std) = mean_std(&xs);
                aggregate.push(AggregateRow {
                    cell: cell_label(value),
                    policy,
                    metric: metric.to_string(),
                    mean,
                    std,
                });
            }
        }
    }
    Ok(Report { runs, aggregate })
}

impl Report {
    pub fn row(&self, cell: &str, policy: Policy, metric: &str) -> Option<&AggregateRow> {
        self.aggregate
            .iter()
            .find(|r| r.cell == cell && r.policy == policy && r.metric == metric)
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from("cell,policy,metric,mean,std\n");
        for r in &self.aggregate {
            out.push_str(&format!("{},{},{},{},{}\n", r.cell, r.policy, r.metric, r.mean, r.std));
        }
        out
    }

    /// Writes `{metric}/{policy}_{cell}_{seed}.csv` per run and `aggregate.csv`.
    pub fn write_csv(&self, dir: &std::path::Path) -> std::io::Result<()> {
        for metric in MetricsSeries::METRICS.iter().copied().chain(["rejection"]) {
            std::fs::create_dir_all(dir.join(metric))?;
        }
        for run in &self.runs {
            let name = format!("{}_{}_{}.csv", run.policy, run.cell(), run.seed);
            for metric in MetricsSeries::METRICS {
                let text = run.metrics.series_csv(metric).expect("known metric");
                std::fs::write(dir.join(metric).join(&name), text)?;
            }
            std::fs::write(dir.join("rejection").join(&name), run.metrics.rejection_csv())?;
        }
        std::fs::write(dir.join("aggregate.csv"), self.aggregate_csv())
    }
}
