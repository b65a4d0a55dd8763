use std::collections::BTreeMap;

use orpool_lp::{LinearProgram, Relation, VarId};

use super::{EmbedError, EmbeddingProblem, OverlapMode};
use crate::topology::scenario_set;

/// Links with less bandwidth than this carry no flow variables.
const MIN_LINK_BANDWIDTH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommodityKind {
    Edge(usize),
    L1(usize),
    L2(usize),
}

/// Flow variables of one source-destination demand.
#[derive(Debug, Clone)]
pub struct Commodity {
    pub kind: CommodityKind,
    pub src: usize,
    pub dst: usize,
    pub demand: f64,
    /// One variable per physical arc of the program.
    pub arcs: Vec<VarId>,
    /// Mapping arcs from the source to each candidate host.
    pub out: Vec<(usize, VarId)>,
    /// Mapping arcs from each candidate host to the destination.
    pub inn: Vec<(usize, VarId)>,
}

/// A built program plus the variable layout needed to read a solution back.
#[derive(Debug, Clone)]
pub struct Program {
    pub lp: LinearProgram,
    /// Physical links that carry flow; link `links[j]` owns arcs `2j` and `2j+1`.
    pub links: Vec<usize>,
    /// Arc endpoints `(from, to)` indexed like the commodity arc variables.
    pub arcs: Vec<(usize, usize)>,
    pub rho: Vec<Vec<VarId>>,
    pub open: Vec<Vec<bool>>,
    pub commodities: Vec<Commodity>,
    /// Reserved L1 bandwidth per neighbor, one variable per arc.
    pub overlap: Vec<(usize, Vec<VarId>)>,
    pub big_m: f64,
}

impl Program {
    pub fn count_rows(&self, prefix: &str) -> usize {
        self.lp.constraints().iter().filter(|c| c.name.starts_with(prefix)).count()
    }
}

/// Builds the relaxed embedding program for `problem`.
pub fn build_program(problem: &EmbeddingProblem) -> Result<Program, EmbedError> {
    problem.check()?;
    let ex = &problem.expanded;
    let net = &problem.physical;
    let nv = problem.virtual_count();
    let nb = problem.base_count();
    let np = net.nodes.len();
    let mut lp = LinearProgram::new();

    let links: Vec<usize> = (0..net.links.len())
        .filter(|&e| net.links[e].bandwidth > MIN_LINK_BANDWIDTH)
        .collect();
    let arcs: Vec<(usize, usize)> = links
        .iter()
        .flat_map(|&e| {
            let l = &net.links[e];
            [(l.u, l.v), (l.v, l.u)]
        })
        .collect();
    let scenarios = if problem.overlap == OverlapMode::AllBackups && ex.k > 0 {
        scenario_set(ex, problem.scenario_cap)?
    } else {
        Vec::new()
    };

    let mut rho = Vec::with_capacity(nv);
    let mut open = Vec::with_capacity(nv);
    for u in 0..nv {
        let demand = problem.demand(u);
        let pinned = problem.pinned.iter().any(|p| p.0 == u);
        let mut row = Vec::with_capacity(np);
        let mut orow = Vec::with_capacity(np);
        for h in 0..np {
            let ok = problem.allowed(u, h) && demand <= net.nodes[h].compute + super::CAPACITY_TOL;
            if pinned && problem.allowed(u, h) && !ok {
                return Err(EmbedError::Infeasible(format!(
                    "pinned host {h} lacks compute for virtual node {u}"
                )));
            }
            let lower = if pinned && ok { 1.0 } else { 0.0 };
            let upper = if ok { 1.0 } else { 0.0 };
            row.push(lp.add_var(format!("r{u}_{h}"), lower, Some(upper), true, problem.alpha(h) * demand)?);
            orow.push(ok);
        }
        rho.push(row);
        open.push(orow);
    }

    for u in 0..nv {
        lp.add_constraint(format!("m{u}"), rho[u].iter().map(|&v| (v, 1.0)).collect(), Relation::Eq, 1.0)?;
    }
    for h in 0..np {
        lp.add_constraint(format!("x{h}"), (0..nv).map(|u| (rho[u][h], 1.0)).collect(), Relation::Le, 1.0)?;
    }
    if problem.rack_separation {
        for (name, hosts) in problem.racks() {
            let coeffs: Vec<(VarId, f64)> = (0..nv)
                .filter(|&u| problem.is_protected(u))
                .flat_map(|u| hosts.iter().map(move |&h| (u, h)))
                .filter(|&(u, h)| open[u][h])
                .map(|(u, h)| (rho[u][h], 1.0))
                .collect();
            if coeffs.len() > 1 {
                lp.add_constraint(format!("s{name}"), coeffs, Relation::Le, 1.0)?;
            }
        }
    }
    for u in 0..nv {
        let demand = problem.demand(u);
        for h in 0..np {
            if open[u][h] {
                lp.add_constraint(
                    format!("c{u}_{h}"),
                    vec![(rho[u][h], demand)],
                    Relation::Le,
                    net.nodes[h].compute,
                )?;
            }
        }
    }

    let l2_demand = problem.effective_l2_demand();
    let mut specs: Vec<(CommodityKind, usize, usize, f64)> = Vec::new();
    for (i, e) in ex.base.edges.iter().enumerate() {
        specs.push((CommodityKind::Edge(i), e.u, e.v, e.bandwidth));
    }
    for (i, l) in ex.l1.iter().enumerate() {
        specs.push((CommodityKind::L1(i), nb + l.backup, l.neighbor, l.demand));
    }
    if l2_demand > 0.0 {
        for (i, &(a, b)) in ex.l2.iter().enumerate() {
            specs.push((CommodityKind::L2(i), nb + a, nb + b, l2_demand));
        }
    }
    let big_m = specs.iter().map(|s| s.3).sum::<f64>() + 1.0;

    let mut commodities = Vec::with_capacity(specs.len());
    for (ci, &(kind, src, dst, demand)) in specs.iter().enumerate() {
        let paid = !matches!(kind, CommodityKind::L1(_));
        let mut avars = Vec::with_capacity(arcs.len());
        for j in 0..arcs.len() {
            let cost = if paid { problem.beta(links[j / 2]) } else { 0.0 };
            avars.push(lp.add_continuous(format!("f{ci}_{j}"), cost)?);
        }
        let mut out = Vec::new();
        let mut inn = Vec::new();
        for h in 0..np {
            if open[src][h] {
                out.push((h, lp.add_continuous(format!("o{ci}_{h}"), 0.0)?));
            }
            if open[dst][h] {
                inn.push((h, lp.add_continuous(format!("i{ci}_{h}"), 0.0)?));
            }
        }
        lp.add_constraint(format!("src{ci}"), out.iter().map(|&(_, v)| (v, 1.0)).collect(), Relation::Eq, demand)?;
        lp.add_constraint(format!("dst{ci}"), inn.iter().map(|&(_, v)| (v, 1.0)).collect(), Relation::Eq, demand)?;
        let mut balance: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); np];
        for (j, &(from, to)) in arcs.iter().enumerate() {
            balance[to].push((avars[j], 1.0));
            balance[from].push((avars[j], -1.0));
        }
        for &(h, v) in &out {
            balance[h].push((v, 1.0));
        }
        for &(h, v) in &inn {
            balance[h].push((v, -1.0));
        }
        for (h, coeffs) in balance.into_iter().enumerate() {
            if !coeffs.is_empty() {
                lp.add_constraint(format!("n{ci}_{h}"), coeffs, Relation::Eq, 0.0)?;
            }
        }
        commodities.push(Commodity {
            kind,
            src,
            dst,
            demand,
            arcs: avars,
            out,
            inn,
        });
    }

    let mut coupling: BTreeMap<(usize, usize), Vec<(VarId, f64)>> = BTreeMap::new();
    for c in &commodities {
        for &(h, v) in &c.out {
            coupling.entry((c.src, h)).or_default().push((v, 1.0));
        }
        for &(h, v) in &c.inn {
            coupling.entry((c.dst, h)).or_default().push((v, 1.0));
        }
    }
    for ((u, h), mut coeffs) in coupling {
        coeffs.push((rho[u][h], -big_m));
        lp.add_constraint(format!("k{u}_{h}"), coeffs, Relation::Le, 0.0)?;
    }

    let mut overlap = Vec::new();
    for v in ex.l1_neighbors() {
        let triples: Vec<(usize, usize, &Commodity)> = commodities
            .iter()
            .filter_map(|c| match c.kind {
                CommodityKind::L1(i) if ex.l1[i].neighbor == v => Some((ex.l1[i].backup, ex.l1[i].critical, c)),
                _ => None,
            })
            .collect();
        let mut cs: Vec<usize> = triples.iter().map(|t| t.1).collect();
        cs.sort_unstable();
        cs.dedup();
        let mut vars = Vec::with_capacity(arcs.len());
        for j in 0..arcs.len() {
            let w = lp.add_continuous(format!("w{v}_{j}"), problem.beta(links[j / 2]))?;
            vars.push(w);
            let name = |s: usize| format!("ov{v}_{j}_{s}");
            match problem.overlap {
                OverlapMode::None => {
                    let mut coeffs = vec![(w, 1.0)];
                    coeffs.extend(triples.iter().map(|t| (t.2.arcs[j], -1.0)));
                    lp.add_constraint(name(0), coeffs, Relation::Ge, 0.0)?;
                }
                OverlapMode::AllBackups => {
                    for (s, scen) in scenarios.iter().enumerate() {
                        let mut coeffs = vec![(w, 1.0)];
                        coeffs.extend(triples.iter().filter(|t| scen.contains(&t.1)).map(|t| (t.2.arcs[j], -1.0)));
                        lp.add_constraint(name(s), coeffs, Relation::Ge, 0.0)?;
                    }
                }
                OverlapMode::Assignment if cs.len() == 1 || ex.k == 1 => {
                    for (s, t) in triples.iter().enumerate() {
                        lp.add_constraint(name(s), vec![(w, 1.0), (t.2.arcs[j], -1.0)], Relation::Ge, 0.0)?;
                    }
                }
                OverlapMode::Assignment => {
                    // Dual of the max-weight assignment of failed critical
                    // nodes to distinct backups.
                    let y: Vec<VarId> = cs
                        .iter()
                        .map(|c| lp.add_continuous(format!("y{v}_{j}_{c}"), 0.0))
                        .collect::<Result<_, _>>()?;
                    let z: Vec<VarId> = (0..ex.k)
                        .map(|a| lp.add_continuous(format!("z{v}_{j}_{a}"), 0.0))
                        .collect::<Result<_, _>>()?;
                    for (s, t) in triples.iter().enumerate() {
                        let ci = cs.binary_search(&t.1).expect("critical node listed");
                        lp.add_constraint(
                            name(s),
                            vec![(y[ci], 1.0), (z[t.0], 1.0), (t.2.arcs[j], -1.0)],
                            Relation::Ge,
                            0.0,
                        )?;
                    }
                    let mut coeffs = vec![(w, 1.0)];
                    coeffs.extend(y.iter().chain(&z).map(|&d| (d, -1.0)));
                    lp.add_constraint(name(triples.len()), coeffs, Relation::Ge, 0.0)?;
                }
            }
        }
        overlap.push((v, vars));
    }

    for (j, &e) in links.iter().enumerate() {
        let mut coeffs = Vec::new();
        for arc in [2 * j, 2 * j + 1] {
            for c in &commodities {
                if !matches!(c.kind, CommodityKind::L1(_)) {
                    coeffs.push((c.arcs[arc], 1.0));
                }
            }
            for (_, vars) in &overlap {
                coeffs.push((vars[arc], 1.0));
            }
        }
        if !coeffs.is_empty() {
            lp.add_constraint(format!("cap{e}"), coeffs, Relation::Le, net.links[e].bandwidth)?;
        }
    }

    Ok(Program {
        lp,
        links,
        arcs,
        rho,
        open,
        commodities,
        overlap,
        big_m,
    })
}
