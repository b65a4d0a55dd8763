use std::collections::BTreeSet;

use orpool_lp::{solve_with, Backend, LpStatus, SolveOptions};

use super::program::{build_program, CommodityKind, Program};
use super::validate::validate;
use super::{ArcFlow, EmbedError, EmbeddingProblem, EmbeddingSolution, Endpoint, OverlapReservation, Usage};

/// Flow values at or below this are treated as zero when reading a solution.
const FLOW_EPS: f64 = 1e-12;
/// Largest constraint violation accepted in a returned solution.
const ACCEPT_TOL: f64 = 1e-6;

fn default_options() -> SolveOptions {
    SolveOptions {
        backend: Backend::Sparse,
        ..SolveOptions::default()
    }
}

/// Relax, round the node map greedily, then re-solve the flows with the map fixed.
pub fn solve_embedding(problem: &EmbeddingProblem) -> Result<EmbeddingSolution, EmbedError> {
    solve_embedding_with(problem, &default_options())
}

pub fn solve_embedding_with(problem: &EmbeddingProblem, options: &SolveOptions) -> Result<EmbeddingSolution, EmbedError> {
    problem.check()?;
    let program = build_program(problem)?;
    for u in 0..problem.virtual_count() {
        if !program.open[u].iter().any(|&o| o) {
            return Err(EmbedError::Infeasible(format!("no host can take virtual node {u}")));
        }
    }
    let relaxed = run(&program, options)?;
    let map = round(problem, &program, &relaxed.0)?;
    solve_fixed_with(problem, &map, options)
}

/// Optimal flows for a given node map.
pub fn solve_fixed(problem: &EmbeddingProblem, map: &[usize]) -> Result<EmbeddingSolution, EmbedError> {
    solve_fixed_with(problem, map, &default_options())
}

fn solve_fixed_with(problem: &EmbeddingProblem, map: &[usize], options: &SolveOptions) -> Result<EmbeddingSolution, EmbedError> {
    if map.len() != problem.virtual_count() {
        return Err(EmbedError::Inconsistent(format!(
            "map covers {} of {} virtual nodes",
            map.len(),
            problem.virtual_count()
        )));
    }
    let mut fixed = problem.clone();
    fixed.pinned = map.iter().copied().enumerate().collect();
    for &(u, h) in &problem.pinned {
        if map[u] != h {
            return Err(EmbedError::Inconsistent(format!("map moves pinned node {u}")));
        }
    }
    if map.iter().enumerate().any(|(u, &h)| !problem.allowed(u, h)) {
        return Err(EmbedError::Infeasible("map uses a disallowed host".into()));
    }
    let program = build_program(&fixed)?;
    let (values, objective) = run(&program, options)?;
    let solution = extract(&fixed, &program, &values, objective, map);
    let report = validate(&solution, problem);
    if !report.is_feasible(ACCEPT_TOL) {
        return Err(EmbedError::Invalid(report.summary()));
    }
    Ok(solution)
}

fn run(program: &Program, options: &SolveOptions) -> Result<(Vec<f64>, f64), EmbedError> {
    let sol = solve_with(&program.lp, options)?;
    match sol.status {
        LpStatus::Optimal => Ok((sol.values, sol.objective)),
        status => Err(EmbedError::Infeasible(format!("program is {status}"))),
    }
}

/// Greedy rounding by descending fractional map value, ties by host then node.
fn round(problem: &EmbeddingProblem, program: &Program, values: &[f64]) -> Result<Vec<usize>, EmbedError> {
    let nv = problem.virtual_count();
    let np = problem.physical.nodes.len();
    let mut pairs = Vec::new();
    for u in 0..nv {
        for h in 0..np {
            if program.open[u][h] {
                pairs.push((values[program.rho[u][h].0], h, u));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut map: Vec<Option<usize>> = vec![None; nv];
    let mut hosts = BTreeSet::new();
    let mut racks = BTreeSet::new();
    let rack = |h: usize| problem.physical.nodes[h].rack.as_deref();
    for &(u, h) in &problem.pinned {
        map[u] = Some(h);
        hosts.insert(h);
        if problem.rack_separation && problem.is_protected(u) {
            racks.extend(rack(h));
        }
    }
    for (_, h, u) in pairs {
        if map[u].is_some() || hosts.contains(&h) {
            continue;
        }
        let guarded = problem.rack_separation && problem.is_protected(u);
        if guarded && rack(h).is_some_and(|r| racks.contains(r)) {
            continue;
        }
        map[u] = Some(h);
        hosts.insert(h);
        if guarded {
            racks.extend(rack(h));
        }
    }
    map.iter()
        .enumerate()
        .map(|(u, h)| h.ok_or_else(|| EmbedError::Infeasible(format!("rounding left virtual node {u} without a host"))))
        .collect()
}

fn extract(
    problem: &EmbeddingProblem,
    program: &Program,
    values: &[f64],
    objective: f64,
    map: &[usize],
) -> EmbeddingSolution {
    let node_map = map.to_vec();
    let phys = |j: usize| (Endpoint::Physical(program.arcs[j].0), Endpoint::Physical(program.arcs[j].1));
    let mut edge_flows = Vec::new();
    let mut l1_flows = Vec::new();
    let mut l2_flows = Vec::new();
    let nlinks = problem.physical.links.len();
    let mut primary = vec![0.0; nlinks];
    let mut redundant = vec![0.0; nlinks];
    for c in &program.commodities {
        let mut flows = Vec::new();
        for &(h, v) in &c.out {
            push(&mut flows, Endpoint::Virtual(c.src), Endpoint::Physical(h), values[v.0]);
        }
        for (j, v) in c.arcs.iter().enumerate() {
            let (from, to) = phys(j);
            let x = values[v.0];
            if push(&mut flows, from, to, x) {
                match c.kind {
                    CommodityKind::Edge(_) => primary[program.links[j / 2]] += x,
                    CommodityKind::L2(_) => redundant[program.links[j / 2]] += x,
                    CommodityKind::L1(_) => {}
                }
            }
        }
        for &(h, v) in &c.inn {
            push(&mut flows, Endpoint::Physical(h), Endpoint::Virtual(c.dst), values[v.0]);
        }
        match c.kind {
            CommodityKind::Edge(_) => edge_flows.push(flows),
            CommodityKind::L1(_) => l1_flows.push(flows),
            CommodityKind::L2(_) => l2_flows.push(flows),
        }
    }
    let mut overlap = Vec::new();
    for (v, vars) in &program.overlap {
        let mut arcs = Vec::new();
        for (j, w) in vars.iter().enumerate() {
            let (from, to) = phys(j);
            let x = values[w.0];
            if push(&mut arcs, from, to, x) {
                redundant[program.links[j / 2]] += x;
            }
        }
        overlap.push(OverlapReservation { neighbor: *v, arcs });
    }
    let link_bandwidth = (0..nlinks)
        .filter(|&e| primary[e] > 0.0 || redundant[e] > 0.0)
        .map(|e| Usage {
            index: e,
            primary: primary[e],
            redundant: redundant[e],
        })
        .collect();
    let mut node_compute: Vec<Usage> = Vec::new();
    for (u, &h) in node_map.iter().enumerate() {
        let d = problem.demand(u);
        if d <= 0.0 {
            continue;
        }
        let (p, r) = if problem.is_backup(u) { (0.0, d) } else { (d, 0.0) };
        node_compute.push(Usage {
            index: h,
            primary: p,
            redundant: r,
        });
    }
    node_compute.sort_by_key(|u| u.index);
    EmbeddingSolution {
        node_map,
        edge_flows,
        l1_flows,
        overlap,
        l2_flows,
        link_bandwidth,
        node_compute,
        objective,
    }
}

fn push(flows: &mut Vec<ArcFlow>, from: Endpoint, to: Endpoint, value: f64) -> bool {
    if value > FLOW_EPS {
        flows.push(ArcFlow { from, to, value });
        true
    } else {
        false
    }
}
