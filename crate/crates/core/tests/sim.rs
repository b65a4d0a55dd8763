use orpool_core::sim::*;

fn small(policy: Policy, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        physical_nodes: 10,
        horizon: 40,
        size_range: (2, 5),
        departure_rate: 0.1,
        policy,
        seed,
        ..ScenarioConfig::default()
    }
}

#[test]
fn no_edge_probability_means_no_links() {
    let config = ScenarioConfig {
        edge_probability: 0.0,
        ..ScenarioConfig::default()
    };
    assert!(generate_physical(&config, 3).links.is_empty());
}

#[test]
fn link_count_matches_binomial_mean() {
    let config = ScenarioConfig::full_scale();
    let total: usize = (0..100).map(|s| generate_physical(&config, s).links.len()).sum();
    let mean = total as f64 / 100.0;
    assert!((mean - 312.0).abs() / 312.0 < 0.05, "mean link count {mean}");
}

#[test]
fn physical_network_is_deterministic() {
    let config = ScenarioConfig::default();
    assert_eq!(generate_physical(&config, 9), generate_physical(&config, 9));
    assert_ne!(generate_physical(&config, 9), generate_physical(&config, 10));
}

#[test]
fn pinned_size_and_no_critical() {
    let config = ScenarioConfig {
        size_range: (2, 2),
        critical_fraction: 0.0,
        ..ScenarioConfig::default()
    };
    for slot in 0..50 {
        let r = generate_request(&config, 1, slot);
        assert_eq!(r.nodes.len(), 2);
        assert!(r.nodes.iter().all(|n| !n.critical));
        assert!(r.reliability.is_none());
        r.validate().unwrap();
    }
}

#[test]
fn request_ranges_hold() {
    let config = ScenarioConfig::default();
    for slot in 0..500 {
        let r = generate_request(&config, 4, slot);
        let n = r.nodes.len();
        assert!((2..=10).contains(&n));
        assert!(r.critical().len() <= 9 * n / 10);
        assert!(r.nodes.iter().all(|v| (5.0..=20.0).contains(&v.demand)));
        assert!(r.edges.iter().all(|e| (10.0..=35.0).contains(&e.bandwidth)));
        r.validate().unwrap();
    }
}

#[test]
fn size_histogram_is_uniform() {
    let config = ScenarioConfig::default();
    let mut counts = [0usize; 9];
    let draws = 10_000;
    for slot in 0..draws {
        counts[generate_request(&config, 7, slot).nodes.len() - 2] += 1;
    }
    let expected = draws as f64 / 9.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 95% quantile of chi-square with 8 degrees of freedom.
    assert!(chi2 < 15.507, "chi-square {chi2} for {counts:?}");
}

#[test]
fn requests_are_deterministic_per_slot() {
    let config = ScenarioConfig::default();
    assert_eq!(generate_request(&config, 5, 17), generate_request(&config, 5, 17));
    assert_ne!(generate_request(&config, 5, 17), generate_request(&config, 5, 18));
    assert_ne!(request_at(&config, 5, 17, 0), request_at(&config, 5, 17, 1));
}

#[test]
fn zero_arrivals_leave_everything_idle() {
    let config = ScenarioConfig {
        arrival_rate: 0.0,
        horizon: 25,
        ..small(Policy::Share, 1)
    };
    let m = run(&config).unwrap();
    assert_eq!(m.slots(), 25);
    assert_eq!(m.arrivals, 0);
    for metric in MetricsSeries::METRICS {
        assert!(m.series(metric).unwrap().iter().all(|&x| x == 0.0), "{metric}");
    }
}

#[test]
fn batch_arrivals_have_the_configured_mean() {
    let config = ScenarioConfig {
        arrival_model: ArrivalModel::Batch,
        arrival_rate: 0.5,
        horizon: 60,
        physical_nodes: 4,
        size_range: (2, 2),
        critical_fraction: 0.0,
        ..small(Policy::Nonr, 2)
    };
    let m = run(&config).unwrap();
    let rate = m.arrivals as f64 / 60.0;
    assert!((0.2..0.9).contains(&rate), "arrival rate {rate}");
}

#[test]
fn every_policy_runs_and_drains() {
    for policy in Policy::ALL {
        let config = ScenarioConfig {
            drain: true,
            ..small(policy, 11)
        };
        let (m, net) = simulate(&config).unwrap();
        assert!(m.arrivals > 0);
        assert!(m.accepted > 0, "{policy} admitted nothing");
        assert!(m.slots() >= 40);
        assert!(net.leases.is_empty());
        let fresh = generate_physical(&config, config.seed);
        assert_eq!(net.available_compute(), fresh.available_compute());
        assert_eq!(net.available_bandwidth(), fresh.available_bandwidth());
        assert_eq!(*m.admitted.last().unwrap(), 0.0);
        for metric in ["cpu_primary", "cpu_redundant", "bw_primary", "bw_redundant"] {
            assert!(m.series(metric).unwrap().iter().all(|x| (0.0..=1.0).contains(x)), "{metric}");
        }
        if policy == Policy::Nonr {
            assert!(m.cpu_redundant.iter().all(|&x| x == 0.0));
            assert!(m.backups.iter().all(|&x| x == 0.0));
        }
        let profile: u64 = m.rejection.iter().map(|b| b.arrivals).sum();
        assert_eq!(profile, m.arrivals);
        let rejected: u64 = m.rejection.iter().map(|b| b.rejected).sum();
        assert_eq!(rejected, m.arrivals - m.accepted);
    }
}

#[test]
fn identical_configs_give_identical_csv() {
    let config = small(Policy::Share, 21);
    let a = run(&config).unwrap();
    let b = run(&config).unwrap();
    for metric in MetricsSeries::METRICS {
        assert_eq!(a.series_csv(metric), b.series_csv(metric));
    }
    assert_eq!(a.rejection_csv(), b.rejection_csv());
}

#[test]
fn single_cell_grid_equals_run() {
    let config = small(Policy::Noshare, 5);
    let report = compare_policies(&PolicyGrid::single(config.clone())).unwrap();
    assert_eq!(report.runs.len(), 1);
    assert_eq!(report.runs[0].metrics, run(&config).unwrap());
    let row = report.row("base", Policy::Noshare, "acceptance").unwrap();
    assert_eq!(row.mean, report.runs[0].metrics.acceptance_rate());
    assert_eq!(row.std, 0.0);
}

#[test]
fn csv_layout() {
    let grid = PolicyGrid {
        base: small(Policy::Nonr, 0),
        policies: vec![Policy::Nonr, Policy::Share],
        sweep: SweepParam::MaxBandwidth,
        values: vec![20.0, 30.0],
        seeds: vec![1, 2],
    };
    let report = compare_policies(&grid).unwrap();
    assert_eq!(report.runs.len(), 8);
    assert_eq!(report.aggregate.len(), 2 * 2 * MetricsSeries::METRICS.len());
    let dir = tempfile::tempdir().unwrap();
    report.write_csv(dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("acceptance").join("share_30_2.csv")).unwrap();
    assert!(text.starts_with("slot,value\n"));
    assert_eq!(text.lines().count(), 41);
    let agg = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("cell,policy,metric,mean,std\n"));
    assert!(agg.contains("\n20,nonr,acceptance,"));
}

#[test]
fn mean_std_of_samples() {
    let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    assert!((s - 1.2909944487358056).abs() < 1e-15);
    assert_eq!(mean_std(&[]), (0.0, 0.0));
}

#[test]
fn config_round_trips_through_json() {
    let config = ScenarioConfig::full_scale();
    let text = serde_json::to_string(&config).unwrap();
    assert_eq!(serde_json::from_str::<ScenarioConfig>(&text).unwrap(), config);
    let partial: ScenarioConfig = serde_json::from_str(r#"{"horizon": 5, "policy": "noshare"}"#).unwrap();
    assert_eq!(partial.horizon, 5);
    assert_eq!(partial.policy, Policy::Noshare);
    assert_eq!(partial.physical_nodes, 20);
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        ScenarioConfig { size_range: (5, 2), ..ScenarioConfig::default() },
        ScenarioConfig { departure_rate: 0.0, ..ScenarioConfig::default() },
        ScenarioConfig { reliability: 1.0, ..ScenarioConfig::default() },
        ScenarioConfig { edge_probability: 1.5, ..ScenarioConfig::default() },
    ];
    for c in bad {
        assert!(matches!(run(&c), Err(SimError::Config(_))));
    }
}
