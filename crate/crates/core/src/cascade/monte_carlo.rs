use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CascadeError, CascadeModel, DegreeModelParams, LoadModelParams, TreeChain};
use crate::reliability::FailureDistribution;

/// Independent generator for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Empirical pmf of the number of failed nodes over `trials` seeded runs.
pub fn monte_carlo_distribution(
    model: &CascadeModel,
    trials: usize,
    seed: u64,
) -> Result<FailureDistribution, CascadeError> {
    if trials == 0 {
        return Err(CascadeError::InvalidParams("at least one trial is required".into()));
    }
    let n = model.n();
    let mut counts = vec![0u64; n + 1];
    match model {
        CascadeModel::Load(p) => {
            p.validate()?;
            let mut loads = vec![0.0; n];
            for t in 0..trials {
                let mut rng = trial_rng(seed, t as u64);
                counts[load_trial(p, &mut loads, &mut rng)] += 1;
            }
        }
        CascadeModel::Tree(p) => {
            let chain = TreeChain::build(p)?;
            let horizon = 50.0 / slowest_rate(p);
            for t in 0..trials {
                let mut rng = trial_rng(seed, t as u64);
                counts[tree_trial(&chain, horizon, &mut rng)] += 1;
            }
        }
        CascadeModel::Degree(p) => {
            p.validate()?;
            let sampler = DegreeSampler::new(p)?;
            for t in 0..trials {
                let mut rng = trial_rng(seed, t as u64);
                counts[sampler.trial(n, &mut rng).min(n)] += 1;
            }
        }
    }
    let probs = counts.iter().map(|&c| c as f64 / trials as f64).collect();
    Ok(FailureDistribution { n, probs })
}

/// One run of the load-redistribution process; returns the number of failures.
pub fn load_trial(p: &LoadModelParams, loads: &mut [f64], rng: &mut impl Rng) -> usize {
    for l in loads.iter_mut() {
        *l = p.l_min + (p.l_max - p.l_min) * rng.random::<f64>();
    }
    let mut failed = 0;
    loop {
        let extra = p.d_disturb + failed as f64 * p.p_transfer;
        let now = loads.iter().filter(|&&l| l + extra > p.l_fail).count();
        if now == failed {
            return failed;
        }
        failed = now;
    }
}

fn slowest_rate(p: &super::TreeModelParams) -> f64 {
    p.fail_rates
        .iter()
        .chain(&p.repair_rates)
        .flatten()
        .chain(p.env_transition_rates.iter().filter(|r| **r > 0.0))
        .fold(f64::INFINITY, |m, &r| m.min(r))
}

/// State of the chain at time `horizon`, started from environment 0 with all categories up.
fn tree_trial(chain: &TreeChain, horizon: f64, rng: &mut impl Rng) -> usize {
    let mut state = 0;
    let mut t = 0.0;
    loop {
        let exit = chain.exit[state];
        t += -(1.0 - rng.random::<f64>()).ln() / exit;
        if t > horizon {
            return chain.failed_count(state);
        }
        let mut pick = rng.random::<f64>() * exit;
        let edges = &chain.out[state];
        state = edges[edges.len() - 1].0;
        for &(next, r) in edges {
            if pick < r {
                state = next;
                break;
            }
            pick -= r;
        }
    }
}

/// Draws random graphs and thresholds for the threshold cascade.
pub struct DegreeSampler<'a> {
    params: &'a DegreeModelParams,
    degrees: WeightedIndex<f64>,
    thresholds: WeightedIndex<f64>,
}

impl<'a> DegreeSampler<'a> {
    pub fn new(params: &'a DegreeModelParams) -> Result<Self, CascadeError> {
        let err = |e: rand::distr::weighted::Error| CascadeError::InvalidParams(e.to_string());
        Ok(Self {
            params,
            degrees: WeightedIndex::new(&params.degree_dist).map_err(err)?,
            thresholds: WeightedIndex::new(&params.threshold_probs).map_err(err)?,
        })
    }

    /// Cascade size after failing one random node of a fresh `nodes`-node graph.
    pub fn trial(&self, nodes: usize, rng: &mut impl Rng) -> usize {
        if nodes == 0 {
            return 0;
        }
        let adj = configuration_graph(nodes, |r| self.degrees.sample(r), rng);
        let phi: Vec<f64> = (0..nodes).map(|_| self.params.thresholds[self.thresholds.sample(rng)]).collect();
        threshold_cascade(&adj, &phi, rng.random_range(0..nodes))
    }
}

/// Configuration-model graph; self-loops and repeated edges are dropped.
pub fn configuration_graph<R: Rng>(nodes: usize, mut degree: impl FnMut(&mut R) -> usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut stubs = Vec::new();
    for v in 0..nodes {
        let d = degree(rng);
        stubs.extend(std::iter::repeat_n(v, d));
    }
    stubs.shuffle(rng);
    let mut adj = vec![Vec::new(); nodes];
    for pair in stubs.chunks_exact(2) {
        let (a, b) = (pair[0], pair[1]);
        if a != b && !adj[a].contains(&b) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    adj
}

/// Fails `seed` and propagates: a node fails once the failed fraction of its
/// neighbors reaches its threshold. Returns the number of failed nodes.
pub fn threshold_cascade(adj: &[Vec<usize>], phi: &[f64], seed: usize) -> usize {
    let mut failed = vec![false; adj.len()];
    let mut hits = vec![0usize; adj.len()];
    let mut queue = vec![seed];
    failed[seed] = true;
    let mut count = 1;
    while let Some(u) = queue.pop() {
        for &v in &adj[u] {
            if failed[v] {
                continue;
            }
            hits[v] += 1;
            if hits[v] as f64 >= phi[v] * adj[v].len() as f64 - 1e-12 {
                failed[v] = true;
                count += 1;
                queue.push(v);
            }
        }
    }
    count
}
