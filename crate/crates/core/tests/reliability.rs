use orpool_core::reliability::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_distribution(rng: &mut ChaCha8Rng, n: usize) -> FailureDistribution {
    let w: Vec<f64> = (0..=n).map(|_| rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    FailureDistribution::new(n, w.iter().map(|x| x / s).collect()).unwrap()
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Sum over every subset of failed critical nodes and failed backups.
fn exhaustive(n: usize, k: usize, p: f64, f: &FailureDistribution) -> f64 {
    let mut total = 0.0;
    for crit in 0u32..(1 << n) {
        let x = crit.count_ones() as usize;
        let w_crit = f.probs[x] / binom(n, x);
        for back in 0u32..(1 << k) {
            let y = back.count_ones() as usize;
            if x + y <= k {
                total += w_crit * p.powi(y as i32) * (1.0 - p).powi((k - y) as i32);
            }
        }
    }
    total
}

#[test]
fn general_matches_subset_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..40 {
        let n = rng.random_range(0..=8);
        let k = rng.random_range(0..=8);
        let p = rng.random_range(0.01..0.5);
        let f = random_distribution(&mut rng, n);
        let got = reliability_general(k, p, &f);
        let want = exhaustive(n, k, p, &f);
        assert!((got - want).abs() < 1e-9, "n={n} k={k} p={p}: {got} vs {want}");
    }
    let f = random_distribution(&mut rng, 12);
    assert!((reliability_general(12, 0.2, &f) - exhaustive(12, 12, 0.2, &f)).abs() < 1e-9);
}

fn monte_carlo(n: usize, k: usize, p: f64, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ok = 0usize;
    for _ in 0..trials {
        let failed = (0..n + k).filter(|_| rng.random::<f64>() < p).count();
        if failed <= k {
            ok += 1;
        }
    }
    ok as f64 / trials as f64
}

fn within_three_se(est: f64, exact: f64, trials: usize) -> bool {
    let se = (exact * (1.0 - exact) / trials as f64).sqrt();
    (est - exact).abs() <= 3.0 * se + 1.0 / trials as f64
}

#[test]
fn independent_matches_simulation_for_the_quoted_case() {
    let trials = 1_000_000;
    let exact = reliability_independent(10, 2, 0.05);
    assert!(within_three_se(monte_carlo(10, 2, 0.05, trials, 7), exact, trials));
}

#[test]
fn independent_matches_simulation_on_random_triples() {
    let trials = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..20 {
        let n = rng.random_range(1..=10);
        let k = rng.random_range(0..=4);
        let p = rng.random_range(0.02..0.3);
        let exact = reliability_independent(n, k, p);
        let est = monte_carlo(n, k, p, trials, 0x9e37_79b9 ^ i);
        assert!(within_three_se(est, exact, trials), "n={n} k={k} p={p}: {est} vs {exact}");
    }
}

#[test]
fn plugging_the_binomial_into_the_general_formula() {
    let f = independent_distribution(100, 0.01);
    assert_eq!(
        min_backups(100, 0.01, 0.99999, &f).unwrap(),
        min_backups_independent(100, 0.01, 0.99999).unwrap()
    );
}

#[test]
fn worst_case_needs_k_max_backups() {
    for &(n, p, r) in &[(10usize, 0.05, 0.999), (40, 0.01, 0.9999), (3, 0.2, 0.99)] {
        let f = FailureDistribution::point_mass(n, n);
        let k = min_backups(n, p, r, &f).unwrap();
        // every critical node is down, so the backups alone must leave n survivors
        assert_eq!(k, k_max(n, p, r).unwrap());
    }
}

#[test]
fn ratio_approaches_its_limit_as_n_grows() {
    let (p, r) = (0.02, 0.99999);
    let ratios: Vec<f64> = [1_000usize, 10_000, 100_000, 1_000_000]
        .iter()
        .map(|&n| n as f64 / min_backups_independent(n, p, r).unwrap() as f64)
        .collect();
    for w in ratios.windows(2) {
        assert!(w[1] > w[0], "{ratios:?}");
    }
    let limit = 1.0 / p - 1.0;
    assert!(ratios.iter().all(|&q| q < limit));
    assert!((limit - ratios[3]) / limit < 0.05, "{ratios:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reliability_is_monotone_in_k(seed in any::<u64>(), n in 0usize..30, p in 0.001f64..0.6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_distribution(&mut rng, n);
        let mut prev = reliability_general(0, p, &f);
        for k in 1..40 {
            let cur = reliability_general(k, p, &f);
            prop_assert!(cur >= prev - PROB_TOL);
            prev = cur;
        }
    }

    #[test]
    fn min_backups_is_minimal(seed in any::<u64>(), n in 1usize..40, p in 0.001f64..0.3, r in 0.5f64..0.9999) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_distribution(&mut rng, n);
        let k = min_backups(n, p, r, &f).unwrap();
        prop_assert!(reliability_general(k, p, &f) >= r - PROB_TOL);
        if k > 0 {
            prop_assert!(reliability_general(k - 1, p, &f) < r - PROB_TOL);
        }
    }

    #[test]
    fn distributions_are_normalized(n in 0usize..500, p in 0.0001f64..0.9999) {
        let f = independent_distribution(n, p);
        prop_assert!((f.total() - 1.0).abs() < 1e-9);
        prop_assert!(f.check().is_ok());
    }

    #[test]
    fn beta_and_binomial_routes_agree(n in 1usize..200, k in 0usize..40, p in 0.001f64..0.5) {
        let b = regularized_incomplete_beta(1.0 - p, n as u64, k as u64 + 1).unwrap();
        prop_assert!((b - reliability_independent(n, k, p)).abs() < 1e-10);
    }
}
