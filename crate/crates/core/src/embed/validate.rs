use std::collections::{BTreeMap, BTreeSet};

use super::{ArcFlow, EmbeddingProblem, EmbeddingSolution, Endpoint, OverlapMode};
use crate::topology::scenario_set;

/// Violations at or below this are not listed individually.
const REPORT_TOL: f64 = 1e-9;

const FAMILIES: [&str; 10] = [
    "mapping",
    "placement",
    "separation",
    "compute",
    "conservation",
    "coupling",
    "overlap",
    "capacity",
    "sign",
    "accounting",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub family: &'static str,
    pub location: String,
    pub amount: f64,
}

/// Largest violation of every constraint family, plus each individual violation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub max: BTreeMap<&'static str, f64>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn new() -> Self {
        Self {
            max: FAMILIES.iter().map(|&f| (f, 0.0)).collect(),
            violations: Vec::new(),
        }
    }

    fn record(&mut self, family: &'static str, amount: f64, location: impl FnOnce() -> String) {
        let m = self.max.get_mut(family).expect("known family");
        if amount > *m {
            *m = amount;
        }
        if amount > REPORT_TOL {
            self.violations.push(Violation {
                family,
                location: location(),
                amount,
            });
        }
    }

    pub fn family(&self, family: &str) -> f64 {
        self.max.get(family).copied().unwrap_or(0.0)
    }

    pub fn max_violation(&self) -> f64 {
        self.max.values().fold(0.0, |a, &b| a.max(b))
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_violation() <= tol
    }

    pub fn summary(&self) -> String {
        let mut worst: Vec<&Violation> = self.violations.iter().collect();
        worst.sort_by(|a, b| b.amount.total_cmp(&a.amount));
        worst
            .iter()
            .take(5)
            .map(|v| format!("{} at {}: {:.3e}", v.family, v.location, v.amount))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Largest total weight of an assignment of rows to distinct columns, where
/// a row may stay unassigned. `weights[i][j]` is the weight of row `i` on
/// column `j`; all rows must have the same length.
pub fn max_assignment_weight(weights: &[Vec<f64>]) -> f64 {
    let cols = weights.first().map_or(0, Vec::len);
    if cols > 20 {
        // Too many columns for the subset table; each row takes its best column.
        return weights.iter().map(|r| r.iter().fold(0.0, |a: f64, &b| a.max(b))).sum();
    }
    let mut best = vec![f64::NEG_INFINITY; 1 << cols];
    best[0] = 0.0;
    for row in weights {
        let mut next = best.clone();
        for mask in 0..best.len() {
            if best[mask] == f64::NEG_INFINITY {
                continue;
            }
            for (j, &w) in row.iter().enumerate() {
                if mask >> j & 1 == 0 {
                    let t = mask | 1 << j;
                    next[t] = next[t].max(best[mask] + w);
                }
            }
        }
        best = next;
    }
    best.into_iter().fold(0.0, f64::max)
}

struct Commodity<'a> {
    name: String,
    src: usize,
    dst: usize,
    demand: f64,
    flows: Option<&'a Vec<ArcFlow>>,
}

/// Re-checks every constraint family of `problem` against `solution`
/// without using the solver's program.
pub fn validate(solution: &EmbeddingSolution, problem: &EmbeddingProblem) -> ValidationReport {
    let mut rep = ValidationReport::new();
    let net = &problem.physical;
    let ex = &problem.expanded;
    let nv = problem.virtual_count();
    let nb = problem.base_count();
    let np = net.nodes.len();

    let map = &solution.node_map;
    if map.len() != nv || map.iter().any(|&h| h >= np) {
        rep.record("mapping", 1.0, || format!("node map has {} entries for {nv} nodes", map.len()));
        return rep;
    }
    let mut seen = BTreeMap::new();
    for (u, &h) in map.iter().enumerate() {
        if let Some(other) = seen.insert(h, u) {
            rep.record("mapping", 1.0, || format!("host {h} holds virtual nodes {other} and {u}"));
        }
        if !problem.allowed(u, h) {
            rep.record("placement", 1.0, || format!("virtual node {u} on disallowed host {h}"));
        }
    }
    if problem.rack_separation {
        let mut racks = BTreeMap::new();
        for (u, &h) in map.iter().enumerate() {
            if let (true, Some(r)) = (problem.is_protected(u), &net.nodes[h].rack) {
                if let Some(other) = racks.insert(r.as_str(), u) {
                    rep.record("separation", 1.0, || format!("nodes {other} and {u} share rack {r}"));
                }
            }
        }
    }
    let mut load = vec![0.0; np];
    for (u, &h) in map.iter().enumerate() {
        load[h] += problem.demand(u);
    }
    for h in 0..np {
        rep.record("compute", load[h] - net.nodes[h].compute, || format!("host {h}"));
    }
    let mut booked = vec![0.0; np];
    for u in &solution.node_compute {
        if u.index < np {
            booked[u.index] += u.total();
        }
    }
    for h in 0..np {
        rep.record("accounting", (booked[h] - load[h]).abs(), || format!("compute on host {h}"));
    }

    let link_of: BTreeMap<(usize, usize), usize> = net
        .links
        .iter()
        .enumerate()
        .map(|(e, l)| ((l.u.min(l.v), l.u.max(l.v)), e))
        .collect();
    let link = |a: usize, b: usize| link_of.get(&(a.min(b), a.max(b))).copied();

    let l2_demand = problem.effective_l2_demand();
    let mut commodities = Vec::new();
    for (i, e) in ex.base.edges.iter().enumerate() {
        commodities.push(Commodity {
            name: format!("edge {i}"),
            src: e.u,
            dst: e.v,
            demand: e.bandwidth,
            flows: solution.edge_flows.get(i),
        });
    }
    for (i, l) in ex.l1.iter().enumerate() {
        commodities.push(Commodity {
            name: format!("l1 {i}"),
            src: nb + l.backup,
            dst: l.neighbor,
            demand: l.demand,
            flows: solution.l1_flows.get(i),
        });
    }
    if l2_demand > 0.0 {
        for (i, &(a, b)) in ex.l2.iter().enumerate() {
            commodities.push(Commodity {
                name: format!("l2 {i}"),
                src: nb + a,
                dst: nb + b,
                demand: l2_demand,
                flows: solution.l2_flows.get(i),
            });
        }
    }
    let expected = (ex.base.edges.len(), ex.l1.len(), if l2_demand > 0.0 { ex.l2.len() } else { 0 });
    let got = (solution.edge_flows.len(), solution.l1_flows.len(), solution.l2_flows.len());
    if expected != got {
        rep.record("conservation", 1.0, || format!("flow families sized {got:?}, expected {expected:?}"));
    }

    // Directed per-arc loads of the families that count against capacity.
    let mut arc_load: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for c in &commodities {
        let Some(flows) = c.flows else {
            continue;
        };
        let mut out_src = 0.0;
        let mut in_dst = 0.0;
        let mut net_in = vec![0.0; np];
        for f in flows {
            if f.value < 0.0 {
                rep.record("sign", -f.value, || format!("{} flow {:?}->{:?}", c.name, f.from, f.to));
            }
            match (f.from, f.to) {
                (Endpoint::Virtual(u), Endpoint::Physical(h)) => {
                    if u != c.src || h >= np || map[u] != h {
                        rep.record("coupling", f.value.abs(), || format!("{} leaves {u} through host {h}", c.name));
                    } else {
                        out_src += f.value;
                        net_in[h] += f.value;
                    }
                }
                (Endpoint::Physical(h), Endpoint::Virtual(u)) => {
                    if u != c.dst || h >= np || map[u] != h {
                        rep.record("coupling", f.value.abs(), || format!("{} enters {u} from host {h}", c.name));
                    } else {
                        in_dst += f.value;
                        net_in[h] -= f.value;
                    }
                }
                (Endpoint::Physical(a), Endpoint::Physical(b)) => {
                    if a >= np || b >= np || link(a, b).is_none() {
                        rep.record("conservation", f.value.abs(), || format!("{} uses missing link {a}-{b}", c.name));
                        continue;
                    }
                    net_in[b] += f.value;
                    net_in[a] -= f.value;
                    if !c.name.starts_with("l1") {
                        *arc_load.entry((a, b)).or_insert(0.0) += f.value;
                    }
                }
                (Endpoint::Virtual(a), Endpoint::Virtual(b)) => {
                    rep.record("conservation", f.value.abs(), || format!("{} jumps from {a} to {b}", c.name));
                }
            }
        }
        rep.record("conservation", (out_src - c.demand).abs(), || format!("{} at its source", c.name));
        rep.record("conservation", (in_dst - c.demand).abs(), || format!("{} at its destination", c.name));
        for (h, r) in net_in.iter().enumerate() {
            rep.record("conservation", r.abs(), || format!("{} at host {h}", c.name));
        }
    }
    if solution.edge_flows.len() + solution.l1_flows.len() + solution.l2_flows.len() > commodities.len() {
        rep.record("conservation", 1.0, || "unexpected extra commodities".into());
    }

    let mut reserved: BTreeMap<(usize, (usize, usize)), f64> = BTreeMap::new();
    for o in &solution.overlap {
        for f in &o.arcs {
            if let (Endpoint::Physical(a), Endpoint::Physical(b)) = (f.from, f.to) {
                if f.value < 0.0 {
                    rep.record("sign", -f.value, || format!("reservation toward {} on {a}->{b}", o.neighbor));
                }
                *reserved.entry((o.neighbor, (a, b))).or_insert(0.0) += f.value;
                *arc_load.entry((a, b)).or_insert(0.0) += f.value;
            }
        }
    }
    // L1 flow per (neighbor, arc) and (critical, backup).
    let mut l1: BTreeMap<(usize, (usize, usize)), BTreeMap<(usize, usize), f64>> = BTreeMap::new();
    for (i, l) in ex.l1.iter().enumerate() {
        let Some(flows) = solution.l1_flows.get(i) else {
            continue;
        };
        for f in flows {
            if let (Endpoint::Physical(a), Endpoint::Physical(b)) = (f.from, f.to) {
                *l1.entry((l.neighbor, (a, b)))
                    .or_default()
                    .entry((l.critical, l.backup))
                    .or_insert(0.0) += f.value;
            }
        }
    }
    let scenarios = match problem.overlap {
        OverlapMode::AllBackups => scenario_set(ex, problem.scenario_cap).unwrap_or_default(),
        _ => Vec::new(),
    };
    for (&(v, arc), w) in &l1 {
        let need = match problem.overlap {
            OverlapMode::None => w.values().sum(),
            OverlapMode::AllBackups => scenarios
                .iter()
                .map(|s| w.iter().filter(|((c, _), _)| s.contains(c)).map(|(_, x)| x).sum::<f64>())
                .fold(0.0, f64::max),
            OverlapMode::Assignment => {
                let rows: BTreeSet<usize> = w.keys().map(|k| k.0).collect();
                let table: Vec<Vec<f64>> = rows
                    .iter()
                    .map(|&c| (0..ex.k).map(|a| w.get(&(c, a)).copied().unwrap_or(0.0)).collect())
                    .collect();
                max_assignment_weight(&table)
            }
        };
        let have = reserved.get(&(v, arc)).copied().unwrap_or(0.0);
        rep.record("overlap", need - have, || format!("toward {v} on {}->{}", arc.0, arc.1));
    }

    let mut per_link = vec![0.0; net.links.len()];
    for (&(a, b), &x) in &arc_load {
        if let Some(e) = link(a, b) {
            per_link[e] += x;
        }
    }
    let mut booked = vec![0.0; net.links.len()];
    for u in &solution.link_bandwidth {
        if u.index < booked.len() {
            booked[u.index] += u.total();
        }
    }
    for (e, l) in net.links.iter().enumerate() {
        rep.record("capacity", per_link[e] - l.bandwidth, || format!("link {e}"));
        rep.record("accounting", (booked[e] - per_link[e]).abs(), || format!("bandwidth on link {e}"));
    }
    rep
}
