use std::collections::BTreeSet;

use orpool_core::topology::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn node(demand: f64, critical: bool) -> VirtualNode {
    VirtualNode { demand, critical }
}

fn edge(u: usize, v: usize, bandwidth: f64) -> VirtualEdge {
    VirtualEdge { u, v, bandwidth }
}

fn with_target(nodes: Vec<VirtualNode>, edges: Vec<VirtualEdge>) -> VInfRequest {
    let critical = nodes.iter().any(|n| n.critical);
    VInfRequest {
        nodes,
        edges,
        reliability: critical.then_some(0.999),
        failure: critical.then(|| FailureSpec::independent(0.01)),
    }
}

/// Four nodes in a chain, the first three critical.
fn chain_of_four() -> VInfRequest {
    with_target(
        vec![node(5.0, true), node(5.0, true), node(5.0, true), node(5.0, false)],
        vec![edge(0, 1, 1.0), edge(1, 2, 1.0), edge(2, 3, 1.0)],
    )
}

#[test]
fn chain_of_four_with_two_backups_adds_nine_links() {
    let e = expand(&chain_of_four(), 2).unwrap();
    assert_eq!(e.l1_pairs().len(), 8);
    assert_eq!(e.l2.len(), 1);
    assert_eq!(e.redundant_link_count(), 9);
}

#[test]
fn star_around_a_critical_hub_needs_no_backup_mesh() {
    let mut nodes = vec![node(10.0, true)];
    nodes.extend((0..4).map(|_| node(3.0, false)));
    let v = with_target(nodes, (1..5).map(|i| edge(0, i, 2.0)).collect());
    let e = expand(&v, 2).unwrap();
    assert!(e.l2.is_empty());
    assert_eq!(e.l1_pairs().len(), 8);
}

#[test]
fn zero_backups_leave_the_request_alone() {
    let v = chain_of_four();
    let e = expand(&v, 0).unwrap();
    assert_eq!(e.base, v);
    assert!(e.l1.is_empty() && e.l2.is_empty());
    assert_eq!(e.backup_demand, 0.0);
    assert!(scenario_set(&e, DEFAULT_SCENARIO_CAP).unwrap().is_empty());
}

#[test]
fn backups_without_critical_nodes_are_rejected() {
    let v = with_target(vec![node(1.0, false), node(1.0, false)], vec![edge(0, 1, 1.0)]);
    assert!(expand(&v, 1).is_err());
}

#[test]
fn scenario_counts() {
    let e = expand(&chain_of_four(), 2).unwrap();
    assert_eq!(scenario_set(&e, DEFAULT_SCENARIO_CAP).unwrap().len(), 6);
    let v = with_target((0..10).map(|_| node(1.0, true)).collect(), vec![]);
    let e = expand(&v, 3).unwrap();
    let s = scenario_set(&e, DEFAULT_SCENARIO_CAP).unwrap();
    assert_eq!(s.len(), 175);
    let unique: BTreeSet<_> = s.iter().cloned().collect();
    assert_eq!(unique.len(), 175);
    assert!(s.windows(2).all(|w| (w[0].len(), &w[0]) < (w[1].len(), &w[1])));
}

#[test]
fn large_instances_hit_the_scenario_cap() {
    let v = with_target((0..60).map(|_| node(1.0, true)).collect(), vec![]);
    let e = expand(&v, 30).unwrap();
    assert!(matches!(scenario_set(&e, DEFAULT_SCENARIO_CAP), Err(TopologyError::ScenarioCap { .. })));
}

fn random_request(rng: &mut ChaCha8Rng) -> VInfRequest {
    let n = rng.random_range(1..12);
    let nodes: Vec<VirtualNode> = (0..n).map(|_| node(rng.random_range(1.0..20.0), rng.random_bool(0.5))).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(0.4) {
                edges.push(edge(u, v, rng.random_range(1.0..30.0)));
            }
        }
    }
    with_target(nodes, edges)
}

#[test]
fn link_counts_match_direct_enumeration_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..100 {
        let v = random_request(&mut rng);
        let critical = v.critical();
        let k = if critical.is_empty() { 0 } else { rng.random_range(0..5) };
        let e = expand(&v, k).unwrap();
        let neighbors: BTreeSet<usize> = v
            .edges
            .iter()
            .flat_map(|ed| {
                let mut out = Vec::new();
                if v.nodes[ed.u].critical {
                    out.push(ed.v);
                }
                if v.nodes[ed.v].critical {
                    out.push(ed.u);
                }
                out
            })
            .collect();
        assert_eq!(e.l1_pairs().len(), k * neighbors.len());
        let critical_pair = v.edges.iter().any(|ed| v.nodes[ed.u].critical && v.nodes[ed.v].critical);
        let expected_l2 = if critical_pair { k * k.saturating_sub(1) / 2 } else { 0 };
        assert_eq!(e.l2.len(), expected_l2);
        for l in &e.l1 {
            let base = v
                .edges
                .iter()
                .find(|ed| (ed.u, ed.v) == (l.critical, l.neighbor) || (ed.v, ed.u) == (l.critical, l.neighbor))
                .unwrap();
            assert_eq!(l.demand, base.bandwidth);
        }
        if k > 0 {
            let max_critical = critical.iter().map(|&c| v.nodes[c].demand).fold(0.0, f64::max);
            assert!(critical.iter().all(|&c| e.backup_demand >= v.nodes[c].demand));
            assert_eq!(e.backup_demand, max_critical);
        }
    }
}

proptest! {
    #[test]
    fn expansion_keeps_its_base(seed in any::<u64>(), k in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_request(&mut rng);
        let k = if v.critical().is_empty() { 0 } else { k };
        let before = v.clone();
        let e = expand(&v, k).unwrap();
        prop_assert_eq!(&e.base, &before);
        prop_assert_eq!(e.node_count(), before.nodes.len() + k);
        let text = serde_json::to_string(&e.base).unwrap();
        let back: VInfRequest = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, before);
    }

    #[test]
    fn scenario_count_matches_enumeration(c in 0usize..12, k in 0usize..6) {
        let v = with_target((0..c).map(|_| node(1.0, true)).collect(), vec![]);
        let k = if c == 0 { 0 } else { k };
        let e = expand(&v, k).unwrap();
        let s = scenario_set(&e, DEFAULT_SCENARIO_CAP).unwrap();
        prop_assert_eq!(s.len() as u128, scenario_count(c, k));
        prop_assert!(s.iter().all(|sub| !sub.is_empty() && sub.len() <= k.min(c)));
    }
}
