use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use lmdb_bandit::data::SplitConfig;
use lmdb_bandit::env::CandidateMode;
use lmdb_bandit::experiments::{
    self, AlphaChoice, ApproxRatioConfig, DatasetSource, Generator, MetricKind, PolicyKind, ReplayConfig,
    SimulationConfig,
};
use lmdb_bandit::metrics::OptimumMode;
use lmdb_bandit::policy::{EpsilonGreedyPolicy, MmrPolicy};

const MANIFEST: &str = "manifest.json";

#[derive(Parser, Debug)]
#[command(name = "lmdb", version, about = "Diversified slate bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Regret of one policy on randomly generated users.
    Simulate(SimulateArgs),
    /// Offline replay on a rating dataset; writes metrics.csv.
    Replay(ReplayArgs),
    /// Greedy against exhaustive search on random users; writes ratios.csv.
    ApproxRatio(ApproxArgs),
    /// Parse, filter and split a rating file and report its size.
    Ingest(IngestArgs),
    /// Run again from a manifest written by an earlier command.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Base seed.
    #[arg(long, env = "LMDB_SEED", default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to available parallelism).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct PolicyArgs {
    /// lmdh, logrank, mmr or epsilon-greedy.
    #[arg(long, default_value = "lmdh")]
    policy: String,
    /// Ridge regulariser for LMDH.
    #[arg(long)]
    lambda: Option<f64>,
    /// Exploration scale for LMDH: a number or `theory`.
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long, default_value_t = EpsilonGreedyPolicy::DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = MmrPolicy::DEFAULT_ALPHA)]
    mmr_alpha: f64,
}

impl PolicyArgs {
    fn resolve(&self, lambda: f64, alpha: AlphaChoice) -> Result<PolicyKind> {
        let alpha = match self.alpha.as_deref() {
            None => alpha,
            Some("theory") => AlphaChoice::Theory,
            Some(v) => AlphaChoice::Fixed(v.parse().with_context(|| format!("--alpha: `{v}` is not a number"))?),
        };
        let kind = match self.policy.as_str() {
            "lmdh" => PolicyKind::Lmdh {
                lambda: self.lambda.unwrap_or(lambda),
                alpha,
            },
            "logrank" => PolicyKind::Logrank,
            "mmr" => PolicyKind::Mmr { alpha: self.mmr_alpha },
            "epsilon-greedy" => PolicyKind::EpsilonGreedy { epsilon: self.epsilon },
            other => bail!("--policy: unknown policy `{other}`"),
        };
        kind.validate().context("invalid policy settings")?;
        Ok(kind)
    }
}

#[derive(Args, Debug, Clone)]
struct DatasetArgs {
    /// Rating file.
    #[arg(long)]
    dataset: PathBuf,
    /// ml100k, ml1m or csv.
    #[arg(long, default_value = "ml100k")]
    format: String,
    /// Ratings strictly above this value are positive.
    #[arg(long, default_value_t = 3.0)]
    threshold: f64,
    /// Keep only the N most frequent items.
    #[arg(long)]
    top_items: Option<usize>,
}

impl DatasetArgs {
    fn resolve(&self) -> Result<DatasetSource> {
        if !self.dataset.is_file() {
            bail!("--dataset: `{}` does not exist", self.dataset.display());
        }
        Ok(DatasetSource {
            path: self.dataset.clone(),
            format: self.format.parse().context("--format")?,
            threshold: self.threshold,
            top_items: self.top_items,
        })
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 1000)]
    rounds: usize,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    /// Number of items per simulated instance.
    #[arg(long, default_value_t = 20)]
    items: usize,
    /// Draw this many candidates per round instead of using every item.
    #[arg(long)]
    sample_candidates: Option<usize>,
    /// raw or slate-normalized.
    #[arg(long, default_value = "slate-normalized")]
    metric_mode: String,
    /// exhaustive or greedy-oracle.
    #[arg(long, default_value = "exhaustive")]
    optimum: String,
    /// Preferences the static baselines rank with: true or population-mean.
    #[arg(long, default_value = "true")]
    baseline_preference: String,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Item embedding CSV (`item,e0,...`); derived from training data if absent.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 30)]
    rounds: usize,
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, default_value = "slate-normalized")]
    metric_mode: String,
    /// Comma-separated F-beta weights.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    betas: Vec<f64>,
    /// Evaluate only the first N test users.
    #[arg(long)]
    max_users: Option<usize>,
}

#[derive(Args, Debug)]
struct ApproxArgs {
    #[command(flatten)]
    common: Common,
    /// Slate sizes, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
    k: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    users: usize,
    #[arg(long, default_value_t = 20)]
    items: usize,
    #[arg(long, default_value = "slate-normalized")]
    metric_mode: String,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    dataset: DatasetArgs,
}

#[derive(Args, Debug)]
struct RerunArgs {
    /// Manifest to replay.
    manifest: PathBuf,
    /// Output directory (defaults to the manifest's).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

/// The fully resolved configuration of a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Manifest {
    Simulate { config: SimulationConfig, out: PathBuf },
    Replay { config: ReplayConfig, out: PathBuf },
    ApproxRatio { config: ApproxRatioConfig, out: PathBuf },
    Ingest { source: DatasetSource, split: SplitConfig, out: PathBuf },
}

impl Manifest {
    fn out(&self) -> &Path {
        match self {
            Manifest::Simulate { out, .. }
            | Manifest::Replay { out, .. }
            | Manifest::ApproxRatio { out, .. }
            | Manifest::Ingest { out, .. } => out,
        }
    }

    fn with_out(mut self, dir: PathBuf) -> Self {
        match &mut self {
            Manifest::Simulate { out, .. }
            | Manifest::Replay { out, .. }
            | Manifest::ApproxRatio { out, .. }
            | Manifest::Ingest { out, .. } => *out = dir,
        }
        self
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn metric_kind(s: &str) -> Result<MetricKind> {
    s.parse().context("--metric-mode")
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (manifest, workers) = match cli.command {
        Command::Simulate(a) => {
            let config = SimulationConfig {
                generator: Generator {
                    items: a.items,
                    ..Default::default()
                },
                k: a.k,
                runs: a.runs,
                rounds: a.rounds,
                seed: a.common.seed,
                metric: metric_kind(&a.metric_mode)?,
                candidates: match a.sample_candidates {
                    Some(size) => CandidateMode::Sampled { size },
                    None => CandidateMode::All,
                },
                optimum: a.optimum.parse::<OptimumMode>().context("--optimum")?,
                policy: a.policy.resolve(1.0, AlphaChoice::Theory)?,
                baseline_preference: a.baseline_preference.parse().context("--baseline-preference")?,
                theory_lambda: 1.0,
            };
            (Manifest::Simulate { config, out: a.common.out }, a.common.workers)
        }
        Command::Replay(a) => {
            let mut config = ReplayConfig::new(a.dataset.resolve()?, a.policy.resolve(50.0, AlphaChoice::Fixed(1.0))?);
            if let Some(path) = &a.embeddings {
                if !path.is_file() {
                    bail!("--embeddings: `{}` does not exist", path.display());
                }
            }
            config.embeddings = a.embeddings;
            config.k = a.k;
            config.rounds = a.rounds;
            config.d = a.dim;
            config.seed = a.common.seed;
            config.metric = metric_kind(&a.metric_mode)?;
            config.betas = a.betas;
            config.max_users = a.max_users;
            (Manifest::Replay { config, out: a.common.out }, a.common.workers)
        }
        Command::ApproxRatio(a) => {
            let config = ApproxRatioConfig {
                generator: Generator {
                    items: a.items,
                    ..Default::default()
                },
                users: a.users,
                ks: a.k,
                seed: a.common.seed,
                metric: metric_kind(&a.metric_mode)?,
            };
            (Manifest::ApproxRatio { config, out: a.common.out }, a.common.workers)
        }
        Command::Ingest(a) => (
            Manifest::Ingest {
                source: a.dataset.resolve()?,
                split: SplitConfig {
                    seed: a.common.seed,
                    ..Default::default()
                },
                out: a.common.out,
            },
            a.common.workers,
        ),
        Command::Rerun(a) => {
            let text = fs::read_to_string(&a.manifest)
                .with_context(|| format!("cannot read {}", a.manifest.display()))?;
            let manifest: Manifest = serde_json::from_str(&text).context("malformed manifest")?;
            let manifest = match a.out {
                Some(dir) => manifest.with_out(dir),
                None => manifest,
            };
            (manifest, a.workers)
        }
    };
    execute(&manifest, workers)
}

fn execute(manifest: &Manifest, workers: Option<usize>) -> Result<()> {
    let out = manifest.out();
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    serde_json::to_writer_pretty(create(out, MANIFEST)?, manifest)?;

    match manifest {
        Manifest::Simulate { config, .. } => {
            let report = experiments::run_simulation(config, workers).context("simulation failed")?;
            report.table.write_csv(create(out, "regret.csv")?)?;
            let n = report.table.raw.len();
            let clamps: usize = report.runs.iter().map(|r| r.clamp_hits).sum();
            println!(
                "{}: {} runs x {} rounds, mean raw regret {:.4}, mean scaled regret {:.4}, clamped means {}",
                report.policy,
                report.runs.len(),
                n,
                report.table.raw.last().copied().unwrap_or(0.0),
                report.table.scaled.last().copied().unwrap_or(0.0),
                clamps
            );
            if let Some(alpha) = report.alpha {
                println!("alpha {alpha:.4} (theory {:.4})", report.theory_alpha);
            }
        }
        Manifest::Replay { config, .. } => {
            let world = experiments::prepare_replay(config).context("cannot prepare replay data")?;
            let report = experiments::run_replay(config, &world, workers).context("replay failed")?;
            report.series.write_csv(create(out, "metrics.csv")?)?;
            let last = report.series.len().saturating_sub(1);
            println!(
                "{}: {} test users, {} items, recall@{} {:.4}, diversity@{} {:.4}, exhausted {}",
                report.policy,
                world.test_users.len(),
                world.ground.len(),
                last + 1,
                report.series.recall.get(last).copied().unwrap_or(0.0),
                last + 1,
                report.series.diversity.get(last).copied().unwrap_or(0.0),
                report.exhausted_users
            );
        }
        Manifest::ApproxRatio { config, .. } => {
            let report = experiments::run_approx_ratio(config).context("approximation study failed")?;
            report.write_csv(create(out, "ratios.csv")?)?;
            for (k, mean, min) in report.summary() {
                println!("K={k}: mean ratio {mean:.4}, min {min:.4}");
            }
        }
        Manifest::Ingest { source, split, .. } => {
            let (table, report) = experiments::ingest(source, split).context("ingestion failed")?;
            table.write_id_maps(create(out, "users.map.csv")?, create(out, "items.map.csv")?)?;
            let summary = format!(
                "{}\ntrain: {}\ntest: {}\nraw lines {}, below threshold {}, duplicates {}\n",
                report.stats, report.train, report.test, report.raw_lines, report.below_threshold, report.duplicates
            );
            fs::write(out.join("summary.txt"), &summary)?;
            print!("{summary}");
        }
    }
    Ok(())
}
