//! Command-line front end.
//!
//! Every failure is reported as one JSON object on stderr, e.g.
//! `{"error":"invalid_input","message":"..."}`, with exit code 1.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use crate::config;
use crate::diagnostics::{
    aggregate_visitation, chain_summary, default_burn_in, evaluate_policies, retained_states, similarity_matrix, thin,
};
use crate::env::EnvKind;
use crate::error::{Error, Result};
use crate::io::{self, SummaryRow};
use crate::sampler::{run_chain, ChainRecord, Mode, SamplerConfig};

pub const OUT_DIR_ENV: &str = "CAMEO_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "cameo", version, about = "Metropolis sampling of policy parameters, plain or curiosity-augmented")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one chain and write chain.csv, summary.csv and manifest.txt.
    Sample(SampleArgs),
    /// Run one chain per seed, concurrently, each into its own directory.
    Sweep(SweepArgs),
    /// Post-process a stored run: summary, similarity matrix, visitation map.
    Diagnose(DiagnoseArgs),
    /// Run the four-environment suite.
    Reproduce(ReproduceArgs),
    /// Run a fast suite of numerical oracle checks.
    Selftest,
}

/// Chain settings. Unset flags fall back to the config file, then to the
/// defaults for the chosen environment and mode.
#[derive(Debug, Args, Default, Clone)]
struct RunArgs {
    /// gridworld | cliff | cartpole | acrobot
    #[arg(long)]
    env: Option<String>,
    /// plain | cameo
    #[arg(long)]
    mode: Option<String>,
    /// Chain length K.
    #[arg(long)]
    iters: Option<String>,
    /// Episodes N per utility estimate.
    #[arg(long)]
    episodes: Option<String>,
    /// Proposal standard deviation.
    #[arg(long = "sigma-p")]
    sigma_p: Option<String>,
    #[arg(long)]
    temperature: Option<String>,
    /// Weight of the extrinsic return in the curiosity-mixed reward.
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// resimulate | importance | off
    #[arg(long)]
    bootstrap: Option<String>,
    /// uniform | boundary
    #[arg(long)]
    prior: Option<String>,
    /// Flat key=value config file (a manifest works too).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any other config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunArgs {
    fn flag_pairs(&self) -> Result<Vec<(String, String)>> {
        let named = [
            ("env", &self.env),
            ("mode", &self.mode),
            ("iters", &self.iters),
            ("episodes", &self.episodes),
            ("sigma_p", &self.sigma_p),
            ("temperature", &self.temperature),
            ("mu", &self.mu),
            ("gamma", &self.gamma),
            ("seed", &self.seed),
            ("bootstrap", &self.bootstrap),
            ("prior", &self.prior),
        ];
        let mut pairs: Vec<(String, String)> = named
            .iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        for entry in &self.set {
            let (k, v) = entry
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("--set expects key=value, got '{entry}'")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(pairs)
    }

    fn resolve(&self) -> Result<SamplerConfig> {
        let file = match &self.config {
            Some(path) => io::read_key_values(path)?,
            None => Vec::new(),
        };
        config::resolve(&file, self.config.as_deref(), &self.flag_pairs()?)
    }
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Output directory (default: $CAMEO_OUT_DIR/<env>-<mode>-s<seed>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated seeds, e.g. 0,1,2,3,4.
    #[arg(long, default_value = "0,1,2,3,4")]
    seeds: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    /// Run directory written by `sample`.
    dir: PathBuf,
    /// Write similarity.csv over unique retained parameters.
    #[arg(long)]
    similarity: bool,
    /// Write visitation.csv aggregated over this many retained policies.
    #[arg(long, value_name = "POLICIES")]
    visitation: Option<usize>,
    /// Fresh episodes per policy for the visitation map.
    #[arg(long, default_value_t = 10)]
    episodes_per_policy: usize,
    /// Records to discard (default: 10% of the chain).
    #[arg(long)]
    burn_in: Option<usize>,
    /// Cap on the similarity matrix size; evenly thins the retained states.
    #[arg(long, default_value_t = 500)]
    max_similarity: usize,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    /// Comma-separated seeds.
    #[arg(long, default_value = "0")]
    seeds: String,
    /// Multiplies every chain length; below 1 gives a quick pass.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            if e.use_stderr() {
                eprintln!("{}", json!({"error": "usage", "message": e.to_string().trim_end()}));
            } else {
                print!("{e}");
            }
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            1
        }
    }
}

pub fn error_record(e: &Error) -> serde_json::Value {
    let mut record = json!({"error": e.kind(), "message": e.to_string()});
    if let Error::Iteration { iteration, .. } = e {
        record["iteration"] = json!(iteration);
    }
    if let Error::Parse { path, line, .. } = e {
        record["path"] = json!(path.display().to_string());
        record["line"] = json!(line);
    }
    record
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Sample(args) => {
            let config = args.run.resolve()?;
            let out = args.out.unwrap_or_else(|| default_out(&run_name(&config)));
            let report = sample(&config, &out)?;
            println!("{report}");
            Ok(0)
        }
        Command::Sweep(args) => sweep(&args),
        Command::Diagnose(args) => diagnose(&args),
        Command::Reproduce(args) => reproduce(&args),
        Command::Selftest => Ok(selftest()),
    }
}

fn default_out(name: &str) -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
        .join(name)
}

fn run_name(config: &SamplerConfig) -> String {
    format!("{}-{}-s{}", config.env.kind, config.mode, config.seed)
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let seeds = text
        .split(',')
        .map(|s| s.trim().parse::<u64>().map_err(|e| Error::invalid(format!("seed '{s}': {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(Error::invalid("no seeds given"));
    }
    Ok(seeds)
}

fn ensure_writable(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn summary_row(config: &SamplerConfig, chain: &[ChainRecord]) -> Result<SummaryRow> {
    let summary = chain_summary(chain)?;
    Ok(SummaryRow::new(
        &summary,
        retained_states(chain, 0).len(),
        chain.len(),
        config.episodes,
        config.seed,
    ))
}

/// Runs one chain and writes its artifacts. Returns a JSON report.
pub fn sample(config: &SamplerConfig, out: &Path) -> Result<serde_json::Value> {
    ensure_writable(out)?;
    let started = Instant::now();
    let chain = run_chain(config)?;
    let elapsed = started.elapsed().as_secs_f64();
    let chain_path = io::persist_chain(&chain, out)?;
    let row = summary_row(config, &chain)?;
    io::write_file(&out.join(io::SUMMARY_FILE), &io::summary_csv(&row))?;
    let mut manifest = config::to_pairs(config);
    manifest.extend([
        ("run.command".to_string(), "sample".to_string()),
        ("run.chain".to_string(), io::CHAIN_FILE.to_string()),
        ("run.summary".to_string(), io::SUMMARY_FILE.to_string()),
        ("run.duration_s".to_string(), format!("{elapsed:.3}")),
        ("run.version".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ]);
    io::write_file(&out.join(io::MANIFEST_FILE), &io::key_value_text(&manifest))?;
    Ok(json!({
        "out": out.display().to_string(),
        "chain": chain_path.display().to_string(),
        "env": config.env.kind.to_string(),
        "mode": config.mode.to_string(),
        "seed": config.seed,
        "iterations": row.iterations,
        "acceptance_rate": row.acceptance_rate,
        "best_mean_return": row.best_mean_return,
        "final_mean_return": chain.last().map(|r| r.mean_return),
        "retained_unique": row.retained_unique,
        "duration_s": elapsed,
    }))
}

fn sweep(args: &SweepArgs) -> Result<i32> {
    let base = args.run.resolve()?;
    let seeds = parse_seeds(&args.seeds)?;
    let root = args.out.clone().unwrap_or_else(|| default_out(&format!("{}-{}-sweep", base.env.kind, base.mode)));
    ensure_writable(&root)?;
    let reports = seeds
        .par_iter()
        .map(|seed| {
            let config = SamplerConfig { seed: *seed, ..base.clone() };
            sample(&config, &root.join(format!("seed-{seed}")))
        })
        .collect::<Result<Vec<_>>>()?;
    for r in &reports {
        println!("{r}");
    }
    Ok(0)
}

fn load_run_config(dir: &Path) -> Result<SamplerConfig> {
    let path = dir.join(io::MANIFEST_FILE);
    let entries = io::read_key_values(&path)?;
    config::resolve(&entries, Some(&path), &[])
}

fn diagnose(args: &DiagnoseArgs) -> Result<i32> {
    let config = load_run_config(&args.dir)?;
    let chain = io::load_chain(&args.dir)?;
    let burn_in = args.burn_in.unwrap_or_else(|| default_burn_in(chain.len()));
    let row = summary_row(&config, &chain)?;
    io::write_file(&args.dir.join(io::SUMMARY_FILE), &io::summary_csv(&row))?;
    let mut report = json!({
        "dir": args.dir.display().to_string(),
        "acceptance_rate": row.acceptance_rate,
        "best_mean_return": row.best_mean_return,
        "retained_unique": row.retained_unique,
        "burn_in": burn_in,
    });
    if args.similarity {
        let retained = retained_states(&chain, burn_in);
        let thetas: Vec<_> = thin(&retained, args.max_similarity).into_iter().map(|s| s.theta).collect();
        let matrix = crate::diagnostics::SimilarityMatrix::from_thetas(&thetas)?;
        io::write_file(&args.dir.join(io::SIMILARITY_FILE), &io::similarity_csv(&matrix))?;
        report["similarity_size"] = json!(matrix.size());
        report["mean_off_diagonal_similarity"] = json!(matrix.mean_off_diagonal());
    }
    if let Some(count) = args.visitation {
        let retained = retained_states(&chain, burn_in);
        if retained.is_empty() {
            return Err(Error::invalid("no retained states after burn-in"));
        }
        let policies: Vec<_> = retained[retained.len().saturating_sub(count)..].iter().map(|s| s.theta.clone()).collect();
        let grid = aggregate_visitation(&policies, &config.env, config.hidden, args.episodes_per_policy, config.seed)?;
        io::write_file(&args.dir.join(io::VISITATION_FILE), &io::visitation_csv(&grid))?;
        report["visitation_policies"] = json!(policies.len());
    }
    println!("{report}");
    Ok(0)
}

/// Chain length for each benchmark in the suite.
fn suite() -> [(EnvKind, Mode, usize); 6] {
    [
        (EnvKind::Gridworld, Mode::Cameo, 2000),
        (EnvKind::Cliff, Mode::Cameo, 2000),
        (EnvKind::Gridworld, Mode::Plain, 2000),
        (EnvKind::Cliff, Mode::Plain, 2000),
        (EnvKind::CartPole, Mode::Plain, 200),
        (EnvKind::Acrobot, Mode::Plain, 500),
    ]
}

fn reproduce(args: &ReproduceArgs) -> Result<i32> {
    if !(args.scale > 0.0 && args.scale.is_finite()) {
        return Err(Error::invalid(format!("scale must be positive, got {}", args.scale)));
    }
    let seeds = parse_seeds(&args.seeds)?;
    let root = args.out.clone().unwrap_or_else(|| default_out("reproduce"));
    for (kind, mode, k) in suite() {
        for seed in &seeds {
            let mut config = SamplerConfig::new(kind, mode);
            config.iterations = ((k as f64 * args.scale).round() as usize).max(1);
            config.seed = *seed;
            let dir = root.join(run_name(&config));
            let mut report = sample(&config, &dir)?;
            let chain = io::load_chain(&dir)?;
            let best = crate::diagnostics::best_retained(&chain, 0, 5);
            let thetas: Vec<_> = best.iter().map(|s| s.theta.clone()).collect();
            let evals = evaluate_policies(&thetas, &config.env, config.hidden, config.gamma, 20, *seed)?;
            let fresh = evals.iter().map(|e| e.mean_return).fold(f64::NEG_INFINITY, f64::max);
            report["best_fresh_mean_return"] = json!(fresh);
            if kind.is_tabular() {
                report["best_goal_rate"] = json!(evals.iter().filter_map(|e| e.goal_rate).fold(0.0, f64::max));
            } else {
                let m = similarity_matrix(&chain, default_burn_in(chain.len()), true)?;
                report["mean_off_diagonal_similarity"] = json!(m.mean_off_diagonal());
            }
            println!("{report}");
        }
    }
    Ok(0)
}

fn check(name: &str, ok: bool, detail: String) -> bool {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

/// Small, fast versions of the numerical oracles. Returns the exit code.
pub fn selftest() -> i32 {
    use crate::nn::{DenseNet, OutputActivation};
    use crate::policy::ParamVector;
    use crate::rng::stream;
    use crate::sampler::{mh_accept, DeterministicEvaluator, Metropolis};
    use crate::target::{log_mean_exp_utility, PriorKind};
    use rand::Rng;

    let mut all = true;

    let v = log_mean_exp_utility(&[0.0, 3f64.ln()], 1.0).map(|u| u.value()).unwrap_or(f64::NAN);
    all &= check("log_mean_exp", (v - 2f64.ln()).abs() < 1e-15, format!("{v} vs ln 2"));

    let mut rng = stream(11, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let sizes = [rng.random_range(1..6), rng.random_range(2..10), rng.random_range(1..6)];
        let net = DenseNet::random(&sizes, OutputActivation::Identity, &mut rng).expect("valid sizes");
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t: Vec<f64> = (0..sizes[2]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grad) = net.loss_and_gradient(&x, &t).expect("shapes match");
        let params = net.flatten();
        for j in 0..params.len() {
            let eps = 1e-5;
            let mut p = params.clone();
            p[j] += eps;
            let up = DenseNet::from_flat(&sizes, OutputActivation::Identity, &p).unwrap();
            p[j] -= 2.0 * eps;
            let down = DenseNet::from_flat(&sizes, OutputActivation::Identity, &p).unwrap();
            let lu = crate::nn::mse_loss(&up.forward(&x).unwrap(), &t).unwrap();
            let ld = crate::nn::mse_loss(&down.forward(&x).unwrap(), &t).unwrap();
            let fd = (lu - ld) / (2.0 * eps);
            let denom = grad[j].abs().max(fd.abs()).max(1e-8);
            worst = worst.max((grad[j] - fd).abs() / denom);
        }
    }
    all &= check("gradient", worst < 1e-4, format!("max relative error {worst:.2e}"));

    let mut rng = stream(12, &[]);
    let trials = 100_000;
    let accepted = (0..trials).filter(|_| mh_accept(0.5f64.ln(), 0.0, &mut rng)).count();
    let rate = accepted as f64 / trials as f64;
    all &= check("mh_accept", (rate - 0.5).abs() < 0.01, format!("rate {rate:.4}"));

    let metropolis = Metropolis {
        iterations: 20_000,
        sigma_p: 0.5,
        prior: PriorKind::Uniform,
        seed: 13,
    };
    let mut eval = DeterministicEvaluator::new(|t: &ParamVector| -t.as_slice().iter().map(|v| v * v).sum::<f64>(), 1.0);
    match metropolis.run(ParamVector::zeros(2), &mut eval) {
        Ok(chain) => {
            let xs: Vec<f64> = chain[2000..].iter().map(|r| r.theta.as_slice()[0]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            all &= check("gaussian_chain", (0.4..0.6).contains(&var), format!("variance {var:.3} (target 0.5)"));
        }
        Err(e) => all &= check("gaussian_chain", false, e.to_string()),
    }

    let mut config = SamplerConfig::new(EnvKind::Gridworld, Mode::Cameo);
    config.iterations = 5;
    config.episodes = 4;
    let same = match (run_chain(&config), run_chain(&config)) {
        (Ok(a), Ok(b)) => io::chain_csv(&a) == io::chain_csv(&b),
        _ => false,
    };
    all &= check("reproducible_chain", same, "two identical runs".into());

    if all {
        0
    } else {
        1
    }
}
