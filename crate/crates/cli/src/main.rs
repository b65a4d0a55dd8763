use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use orpool_core::cascade::{monte_carlo_distribution, CascadeModel};
use orpool_core::embed::{
    build_program, solve_embedding_with, EmbedError, EmbeddingProblem, OverlapMode, PhysicalNetwork,
};
use orpool_core::pooling::{Admission, BackupPool, PoolMember};
use orpool_core::reliability::{independent_distribution, min_backups, reliability_general, FailureDistribution};
use orpool_core::sim::{compare_policies, Policy, PolicyGrid, ScenarioConfig, SweepParam};
use orpool_core::topology::{expand, FailureSpec, TopologyError, VInfRequest};
use orpool_lp::{emit_mps, Backend, SolveOptions};

mod format;

use format::sig;

const EXIT_USAGE: u8 = 2;
const EXIT_INFEASIBLE_K: u8 = 3;
const EXIT_POOL_STATE: u8 = 4;
const EXIT_NO_EMBEDDING: u8 = 5;
const EXIT_SCENARIO_CAP: u8 = 6;

/// An error carrying the exit code it should end the process with.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn fail<E: Into<anyhow::Error>>(code: u8) -> impl FnOnce(E) -> Failure {
    move |e| Failure { code, error: e.into() }
}

type Outcome = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "orpool", version, about = "Backup sizing, redundancy pooling and survivable embedding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Smallest backup count meeting a reliability guarantee.
    Kcalc(KcalcArgs),
    /// Print a failure-count distribution.
    Distribution(DistributionArgs),
    /// Manage a backup pool stored as JSON.
    Pool(PoolArgs),
    /// Embed a VInf with its backups on a physical network.
    Embed(EmbedArgs),
    /// Run the provisioning simulation over policies and seeds.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct KcalcArgs {
    /// Number of critical nodes (taken from the cascade model when one is given).
    #[arg(long)]
    n: Option<usize>,
    /// Per-node failure probability.
    #[arg(long)]
    p: f64,
    /// Reliability guarantee.
    #[arg(long)]
    r: f64,
    /// JSON cascade model replacing independent failures.
    #[arg(long)]
    cascade: Option<PathBuf>,
    /// Estimate the cascade distribution with this many trials instead of exactly.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct DistributionArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    cascade: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct PoolArgs {
    /// Pool state file.
    state: PathBuf,
    #[command(subcommand)]
    action: PoolAction,
}

#[derive(Args, Clone)]
struct MemberSpec {
    #[arg(long)]
    id: String,
    /// Critical node count.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    r: f64,
    /// Backup count to hold instead of the minimum for the guarantee.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Subcommand)]
enum PoolAction {
    /// Create a pool anchored on the given VInf, replacing any existing state.
    Init(MemberSpec),
    /// Try to admit a member.
    Admit(MemberSpec),
    /// Remove a member and return its slots.
    Remove {
        #[arg(long)]
        id: String,
    },
    /// Print the pool and its anchor reliability.
    Show,
}

#[derive(Clone, Copy, ValueEnum)]
enum OverlapArg {
    Assignment,
    AllBackups,
    None,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Dense,
    Sparse,
    Auto,
}

#[derive(Args)]
struct EmbedArgs {
    /// Physical network JSON.
    #[arg(long, required_unless_present = "problem")]
    physical: Option<PathBuf>,
    /// VInf request JSON.
    #[arg(long, required_unless_present = "problem")]
    vinf: Option<PathBuf>,
    /// Complete embedding problem JSON, with pins and exclusions.
    #[arg(long, conflicts_with_all = ["physical", "vinf", "k"])]
    problem: Option<PathBuf>,
    /// Backup count; by default the minimum for the request's guarantee.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    overlap: Option<OverlapArg>,
    #[arg(long, value_enum, default_value = "sparse")]
    backend: BackendArg,
    /// Solution output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the relaxed program as MPS, with the name map next to it.
    #[arg(long)]
    emit_mps: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    MaxBandwidth,
    Reliability,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario configuration JSON; desk-scale defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the CSV files.
    #[arg(long)]
    out: PathBuf,
    /// Master seed; runs use consecutive seeds from here.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    runs: u64,
    #[arg(long, value_delimiter = ',', default_values_t = ["nonr".to_string(), "share".to_string(), "noshare".to_string()])]
    policies: Vec<String>,
    #[arg(long, value_enum)]
    sweep: Option<SweepArg>,
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    /// Use the full evaluation scale (40 hosts, 800 slots) as the base.
    #[arg(long)]
    full_scale: bool,
    /// Worker threads for independent runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Kcalc(a) => kcalc(a),
        Command::Distribution(a) => distribution(a),
        Command::Pool(a) => pool(a),
        Command::Embed(a) => embed(a),
        Command::Simulate(a) => simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(fail(EXIT_USAGE))?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(fail(EXIT_USAGE))
}

/// Writes `text` to `path` through a temporary file in the same directory.
fn write_atomic(path: &Path, text: &str) -> anyhow::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)?;
    Ok(())
}

fn check_probability(name: &str, x: f64) -> Result<(), Failure> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(fail(EXIT_USAGE)(anyhow::anyhow!("--{name} {x} is not a probability")))
    }
}

fn cascade_distribution(path: &Path, trials: Option<usize>, seed: u64) -> Result<FailureDistribution, Failure> {
    let model: CascadeModel = read_json(path)?;
    let dist = match trials {
        Some(t) => monte_carlo_distribution(&model, t, seed).map_err(anyhow::Error::from),
        None => FailureSpec {
            p: 0.0,
            cascade: Some(model.clone()),
        }
        .distribution(model.n())
        .map_err(anyhow::Error::from),
    };
    dist.map_err(fail(EXIT_USAGE))
}

fn kcalc(a: KcalcArgs) -> Outcome {
    check_probability("p", a.p)?;
    check_probability("r", a.r)?;
    let dist = match &a.cascade {
        Some(path) => cascade_distribution(path, a.trials, a.seed)?,
        None => {
            let n = a
                .n
                .ok_or_else(|| fail(EXIT_USAGE)(anyhow::anyhow!("--n is required without --cascade")))?;
            independent_distribution(n, a.p)
        }
    };
    let k = min_backups(dist.n, a.p, a.r, &dist).map_err(fail(EXIT_INFEASIBLE_K))?;
    println!("k={k} reliability={}", sig(reliability_general(k, a.p, &dist)));
    Ok(())
}

fn distribution(a: DistributionArgs) -> Outcome {
    let dist = match (&a.cascade, a.n, a.p) {
        (Some(path), _, _) => cascade_distribution(path, a.trials, a.seed)?,
        (None, Some(n), Some(p)) => {
            check_probability("p", p)?;
            independent_distribution(n, p)
        }
        _ => return Err(fail(EXIT_USAGE)(anyhow::anyhow!("give --cascade or both --n and --p"))),
    };
    println!("failed,probability");
    for (x, f) in dist.probs.iter().enumerate() {
        println!("{x},{}", sig(*f));
    }
    Ok(())
}

fn member(spec: &MemberSpec) -> Result<PoolMember, Failure> {
    check_probability("p", spec.p)?;
    check_probability("r", spec.r)?;
    let mut m = PoolMember::independent(spec.id.clone(), spec.n, spec.p, spec.r).map_err(fail(EXIT_INFEASIBLE_K))?;
    if let Some(k) = spec.k {
        m.k = k;
    }
    Ok(m)
}

fn load_pool(path: &Path) -> Result<BackupPool, Failure> {
    let mut pool: BackupPool = read_json(path)?;
    pool.rebuild_spectra();
    pool.check_invariants()
        .with_context(|| format!("pool state {}", path.display()))
        .map_err(fail(EXIT_POOL_STATE))?;
    Ok(pool)
}

fn save_pool(path: &Path, pool: &BackupPool) -> Outcome {
    let text = serde_json::to_string_pretty(pool).map_err(fail(EXIT_USAGE))? + "\n";
    write_atomic(path, &text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(fail(EXIT_USAGE))
}

fn pool(a: PoolArgs) -> Outcome {
    match a.action {
        PoolAction::Init(spec) => {
            let anchor = member(&spec)?;
            let pool = BackupPool::new(anchor);
            let r0 = pool.pooled_reliability().map_err(fail(EXIT_POOL_STATE))?;
            save_pool(&a.state, &pool)?;
            println!("created k0={} r0'={}", pool.k0(), sig(r0));
        }
        PoolAction::Admit(spec) => {
            let mut pool = load_pool(&a.state)?;
            let candidate = member(&spec)?;
            let decision = pool.admit(candidate).map_err(fail(EXIT_USAGE))?;
            match decision {
                Admission::Admitted { slots, r0 } => {
                    save_pool(&a.state, &pool)?;
                    let slots: Vec<String> = slots.iter().map(|s| s.to_string()).collect();
                    println!("admitted slots={} r0'={}", slots.join(","), sig(r0));
                }
                Admission::Rejected { reason, r0 } => println!("rejected reason={reason} r0'={}", sig(r0)),
            }
        }
        PoolAction::Remove { id } => {
            let mut pool = load_pool(&a.state)?;
            pool.remove(&id).map_err(fail(EXIT_USAGE))?;
            let r0 = pool.pooled_reliability().map_err(fail(EXIT_POOL_STATE))?;
            save_pool(&a.state, &pool)?;
            println!("removed id={id} r0'={}", sig(r0));
        }
        PoolAction::Show => {
            let pool = load_pool(&a.state)?;
            let r0 = pool.pooled_reliability().map_err(fail(EXIT_POOL_STATE))?;
            println!("anchor={} k0={} lent={} free={}", pool.anchor.id, pool.k0(), pool.lent(), pool.free_slots());
            for m in &pool.members {
                let slots: Vec<String> = pool.slots_of(&m.id).iter().map(|s| s.to_string()).collect();
                println!("member={} n={} k={} slots={}", m.id, m.n, m.k, slots.join(","));
            }
            println!("r0'={}", sig(r0));
        }
    }
    Ok(())
}

fn embed_failure(e: EmbedError) -> Failure {
    let code = match &e {
        EmbedError::Topology(TopologyError::ScenarioCap { .. }) => EXIT_SCENARIO_CAP,
        EmbedError::Infeasible(_) | EmbedError::Invalid(_) => EXIT_NO_EMBEDDING,
        _ => EXIT_USAGE,
    };
    fail(code)(e)
}

fn embed(a: EmbedArgs) -> Outcome {
    let mut problem = match &a.problem {
        Some(path) => read_json::<EmbeddingProblem>(path)?,
        None => {
            let physical: PhysicalNetwork = read_json(a.physical.as_deref().expect("required by clap"))?;
            let request: VInfRequest = read_json(a.vinf.as_deref().expect("required by clap"))?;
            request.validate().map_err(fail(EXIT_USAGE))?;
            let k = match a.k {
                Some(k) => k,
                None => request.backups_needed().map_err(fail(EXIT_INFEASIBLE_K))?,
            };
            let expanded = expand(&request, k).map_err(fail(EXIT_USAGE))?;
            EmbeddingProblem::new(physical.residual(), expanded)
        }
    };
    if let Some(mode) = a.overlap {
        problem.overlap = match mode {
            OverlapArg::Assignment => OverlapMode::Assignment,
            OverlapArg::AllBackups => OverlapMode::AllBackups,
            OverlapArg::None => OverlapMode::None,
        };
    }
    problem.check().map_err(embed_failure)?;
    if let Some(path) = &a.emit_mps {
        let program = build_program(&problem).map_err(embed_failure)?;
        let doc = emit_mps(&program.lp);
        let names = path.with_extension("names");
        std::fs::write(path, &doc.text)
            .and_then(|_| std::fs::write(&names, doc.name_map_text()))
            .with_context(|| format!("writing {}", path.display()))
            .map_err(fail(EXIT_USAGE))?;
    }
    let options = SolveOptions {
        backend: match a.backend {
            BackendArg::Dense => Backend::Dense,
            BackendArg::Sparse => Backend::Sparse,
            BackendArg::Auto => Backend::Auto,
        },
        ..SolveOptions::default()
    };
    let solution = solve_embedding_with(&problem, &options).map_err(embed_failure)?;
    let text = serde_json::to_string_pretty(&solution).map_err(fail(EXIT_USAGE))? + "\n";
    match &a.out {
        Some(path) => write_atomic(path, &text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(fail(EXIT_USAGE))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Outcome {
    let mut base = match &a.config {
        Some(path) => read_json::<ScenarioConfig>(path)?,
        None if a.full_scale => ScenarioConfig::full_scale(),
        None => ScenarioConfig::default(),
    };
    if a.full_scale {
        base.physical_nodes = ScenarioConfig::full_scale().physical_nodes;
        base.horizon = ScenarioConfig::full_scale().horizon;
    }
    if let Some(seed) = a.seed {
        base.seed = seed;
    }
    base.validate().map_err(fail(EXIT_USAGE))?;
    let policies = a
        .policies
        .iter()
        .map(|p| p.parse::<Policy>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| fail(EXIT_USAGE)(anyhow::anyhow!(e)))?;
    if a.runs == 0 || a.jobs == 0 {
        return Err(fail(EXIT_USAGE)(anyhow::anyhow!("--runs and --jobs must be positive")));
    }
    let sweep = match a.sweep {
        None => SweepParam::None,
        Some(SweepArg::MaxBandwidth) => SweepParam::MaxBandwidth,
        Some(SweepArg::Reliability) => SweepParam::Reliability,
    };
    if sweep != SweepParam::None && a.values.is_empty() {
        return Err(fail(EXIT_USAGE)(anyhow::anyhow!("--sweep needs --values")));
    }
    let grid = PolicyGrid {
        seeds: (0..a.runs).map(|i| base.seed + i).collect(),
        base,
        policies,
        sweep,
        values: a.values.clone(),
    };
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(a.jobs)
        .build()
        .map_err(fail(EXIT_USAGE))?;
    let report = threads.install(|| compare_policies(&grid)).map_err(fail(EXIT_USAGE))?;
    report
        .write_csv(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))
        .map_err(fail(EXIT_USAGE))?;
    println!("{:<8} {:<8} {:<24} {:>14} {:>14}", "cell", "policy", "metric", "mean", "std");
    for row in &report.aggregate {
        println!("{:<8} {:<8} {:<24} {:>14} {:>14}", row.cell, row.policy, row.metric, sig(row.mean), sig(row.std));
    }
    Ok(())
}
