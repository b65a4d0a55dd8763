use orpool_core::pooling::*;
use orpool_core::reliability::{independent_distribution, FailureDistribution};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact anchor reliability by enumerating every up/down state of every node.
/// Members get priority on their own lent slots; the anchor may use its kept
/// slots plus any lent slot that is up and not needed by its member.
fn exhaustive_anchor_reliability(n0: usize, k0: usize, members: &[(usize, usize)], p: f64) -> f64 {
    let lent: usize = members.iter().map(|m| m.1).sum();
    let kept = k0 - lent;
    let member_nodes: usize = members.iter().map(|m| m.0 + m.1).sum();
    let total = n0 + kept + member_nodes;
    let mut ok = 0.0;
    for state in 0u64..(1 << total) {
        let down = |i: usize| state >> i & 1 == 1;
        let weight = (0..total).fold(1.0, |w, i| w * if down(i) { p } else { 1.0 - p });
        let x0 = (0..n0).filter(|&i| down(i)).count();
        let mut spare = (n0..n0 + kept).filter(|&i| !down(i)).count();
        let mut base = n0 + kept;
        for &(ni, ki) in members {
            let xi = (base..base + ni).filter(|&i| down(i)).count();
            let up = (base + ni..base + ni + ki).filter(|&i| !down(i)).count();
            spare += up.saturating_sub(xi);
            base += ni + ki;
        }
        if x0 <= spare {
            ok += weight;
        }
    }
    ok
}

fn member(id: &str, n: usize, k: usize, p: f64) -> PoolMember {
    PoolMember {
        id: id.into(),
        n,
        k,
        p,
        r: 0.5,
        f: independent_distribution(n, p),
    }
}

#[test]
fn small_pool_matches_exhaustive_enumeration() {
    let p = 0.1;
    let mut pool = BackupPool::new(member("v0", 3, 2, p));
    pool.anchor.r = 0.0001;
    assert!(pool.admit(member("v1", 1, 1, p)).unwrap().is_admitted());
    let got = pool.pooled_reliability().unwrap();
    let want = exhaustive_anchor_reliability(3, 2, &[(1, 1)], p);
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");
}

#[test]
fn random_small_pools_match_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for case in 0..25 {
        let p = rng.random_range(0.02..0.3);
        let n0 = rng.random_range(1..=4);
        let k0 = rng.random_range(1..=4);
        let mut pool = BackupPool::new(member("v0", n0, k0, p));
        pool.anchor.r = 1e-6;
        let mut shapes = Vec::new();
        let mut budget = k0;
        for i in 0..rng.random_range(1..=2) {
            if budget == 0 {
                break;
            }
            let ki = rng.random_range(1..=budget.min(2));
            let ni = rng.random_range(0..=3);
            budget -= ki;
            assert!(pool.admit(member(&format!("m{i}"), ni, ki, p)).unwrap().is_admitted());
            shapes.push((ni, ki));
        }
        let got = pool.pooled_reliability().unwrap();
        let want = exhaustive_anchor_reliability(n0, k0, &shapes, p);
        assert!((got - want).abs() < 1e-10, "case {case}: {got} vs {want}");
    }
}

#[test]
fn anchor_without_members_keeps_its_standalone_reliability() {
    let anchor = PoolMember::independent("v0", 100, 0.01, 0.99999).unwrap();
    let pool = BackupPool::new(anchor.clone());
    let r = pool.pooled_reliability().unwrap();
    assert!((r - orpool_core::reliability::reliability_independent(100, 8, 0.01)).abs() < 1e-12);
}

#[test]
fn lending_all_backups_lowers_anchor_reliability() {
    let anchor = PoolMember::independent("v0", 100, 0.01, 0.99999).unwrap();
    let mut pool = BackupPool::new(anchor);
    pool.anchor.r = 0.5;
    let alone = pool.pooled_reliability().unwrap();
    let m = PoolMember::independent("v1", 100, 0.01, 0.99999).unwrap();
    assert_eq!(m.k, 8);
    assert!(pool.admit(m).unwrap().is_admitted());
    assert!(pool.pooled_reliability().unwrap() < alone);
}

/// Largest member size that still fits beside the anchor.
fn max_member_size(n0: usize, p: f64, r0: f64, r1: f64) -> usize {
    let pool = BackupPool::new(PoolMember::independent("v0", n0, p, r0).unwrap());
    let mut best = 0;
    for n1 in 1..=4 * n0.max(10) {
        let cand = PoolMember::independent("v1", n1, p, r1).unwrap();
        if cand.k > pool.k0() {
            break;
        }
        if pool.reliability_with(&cand).unwrap() >= r0 - 1e-12 {
            best = n1;
        }
    }
    best
}

#[test]
fn maximum_member_size_beside_a_hundred_node_anchor() {
    assert_eq!(max_member_size(100, 0.01, 0.99999, 0.999), 29);
}

#[test]
fn maximum_member_size_is_a_sawtooth() {
    let sizes: Vec<usize> = (20..=200).step_by(5).map(|n0| max_member_size(n0, 0.01, 0.99999, 0.999)).collect();
    let rises = sizes.windows(2).filter(|w| w[1] > w[0]).count();
    let falls = sizes.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(rises >= 3 && falls >= 3, "{sizes:?}");
}

#[test]
fn remove_then_readmit_restores_reliability() {
    let mut pool = BackupPool::new(PoolMember::independent("v0", 30, 0.03, 0.99999).unwrap());
    assert!(pool.admit(PoolMember::independent("a", 2, 0.03, 0.99).unwrap()).unwrap().is_admitted());
    let m = PoolMember::independent("b", 1, 0.03, 0.9).unwrap();
    assert!(pool.admit(m.clone()).unwrap().is_admitted());
    let before = pool.pooled_reliability().unwrap();
    pool.remove("b").unwrap();
    assert!(pool.pooled_reliability().unwrap() >= before);
    assert!(pool.admit(m).unwrap().is_admitted());
    assert!((pool.pooled_reliability().unwrap() - before).abs() < 1e-12);
    pool.remove("a").unwrap();
    pool.remove("b").unwrap();
    let alone = pool.anchor.standalone_reliability();
    assert!((pool.pooled_reliability().unwrap() - alone).abs() < 1e-12);
}

#[test]
fn five_random_pmfs_convolve_like_the_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pmfs: Vec<Vec<f64>> = (0..5)
        .map(|_| {
            let w: Vec<f64> = (0..rng.random_range(1..8)).map(|_| rng.random::<f64>()).collect();
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        })
        .collect();
    let direct = direct_convolution(&pmfs);
    let fft = convolve_members(&pmfs, 64).unwrap();
    for (i, d) in direct.iter().enumerate() {
        assert!((fft[i] - d).abs() < 1e-10);
    }
    assert!(fft[direct.len()..].iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn serialized_pool_round_trips() {
    let mut pool = BackupPool::new(PoolMember::independent("v0", 30, 0.03, 0.99999).unwrap());
    pool.admit(PoolMember::independent("a", 2, 0.03, 0.99).unwrap()).unwrap();
    let text = serde_json::to_string(&pool).unwrap();
    let mut back: BackupPool = serde_json::from_str(&text).unwrap();
    back.rebuild_spectra();
    assert_eq!(back, pool);
    assert_eq!(back.pooled_reliability().unwrap(), pool.pooled_reliability().unwrap());
    back.check_invariants().unwrap();
}

fn random_pmf(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spectral_and_direct_convolution_agree(seed in any::<u64>(), count in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pmfs: Vec<Vec<f64>> = (0..count).map(|_| { let l = rng.random_range(1..10); random_pmf(&mut rng, l) }).collect();
        let direct = direct_convolution(&pmfs);
        let length = direct.len().next_power_of_two();
        let fft = convolve_members(&pmfs, length).unwrap();
        for (i, d) in direct.iter().enumerate() {
            prop_assert!((fft[i] - d).abs() < 1e-10);
        }
        prop_assert!((fft.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn randomized_sessions_keep_the_pool_valid(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = rng.random_range(0.005..0.05);
        let n0 = rng.random_range(20..120);
        let mut pool = BackupPool::new(PoolMember::independent("v0", n0, p, 0.9999).unwrap());
        let mut next = 0;
        for _ in 0..50 {
            let before = pool.pooled_reliability().unwrap();
            if pool.members.is_empty() || rng.random_bool(0.6) {
                let r = [0.9, 0.99, 0.999][rng.random_range(0..3)];
                let m = PoolMember::independent(format!("m{next}"), rng.random_range(0..20), p, r).unwrap();
                next += 1;
                let decision = pool.admit(m).unwrap();
                let after = pool.pooled_reliability().unwrap();
                if decision.is_admitted() {
                    prop_assert!(after <= before + 1e-12);
                } else {
                    prop_assert_eq!(after, before);
                }
            } else {
                let id = pool.members[rng.random_range(0..pool.members.len())].id.clone();
                pool.remove(&id).unwrap();
                prop_assert!(pool.pooled_reliability().unwrap() >= before - 1e-12);
            }
            pool.check_invariants().unwrap();
            prop_assert!(pool.pooled_reliability().unwrap() >= pool.anchor.r - 1e-12);
            for m in &pool.members {
                prop_assert_eq!(pool.slots_of(&m.id).len(), m.k);
            }
        }
    }

    #[test]
    fn usage_pmfs_are_normalized(n in 0usize..60, p in 0.001f64..0.2, r in 0.5f64..0.99999) {
        let m = PoolMember::independent("m", n, p, r).unwrap();
        let q = member_usage_pmf(&m);
        prop_assert_eq!(q.len(), m.k + 1);
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(q.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn members_with_custom_distributions() {
    let f = FailureDistribution::new(3, vec![0.7, 0.1, 0.1, 0.1]).unwrap();
    let m = PoolMember::sized("c", 3, 0.01, 0.99, f).unwrap();
    m.validate().unwrap();
    let mut bad = m.clone();
    bad.k += 1;
    assert!(bad.validate().is_err());
}

#[test]
fn zero_backup_member_is_always_admitted() {
    let mut pool = BackupPool::new(PoolMember::independent("v0", 100, 0.01, 0.99999).unwrap());
    let before = pool.pooled_reliability().unwrap();
    let m = PoolMember::independent("z", 0, 0.01, 0.999).unwrap();
    assert_eq!(m.k, 0);
    let d = pool.admit(m).unwrap();
    assert!(d.is_admitted());
    assert_eq!(pool.pooled_reliability().unwrap(), before);
}

#[test]
fn oversized_member_is_rejected_for_slots() {
    let mut pool = BackupPool::new(PoolMember::independent("v0", 30, 0.03, 0.99999).unwrap());
    let mut big = PoolMember::independent("b", 30, 0.03, 0.9).unwrap();
    big.k = pool.k0() + 1;
    big.f = independent_distribution(30, 0.03);
    match pool.admit(big).unwrap() {
        Admission::Rejected { reason, .. } => assert_eq!(reason, RejectReason::Slots),
        other => panic!("{other:?}"),
    }
    assert!(pool.members.is_empty());
}
