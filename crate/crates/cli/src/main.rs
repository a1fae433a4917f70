use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use planmcts::harness::{
    ablation_csv, ablation_variants, collect_tasks, parse_seeds, run_batch, variant_by_name,
    write_outputs, BatchReport, BatchSpec, EnvSpec, VariantKind, VariantSpec,
};
use planmcts::llm::{AdapterConfig, ChatClient, LlmFactory, UsageMeter};
use planmcts::policy::{PolicyFactory, PolicyTable, ScriptedFactory};
use planmcts::search::SearchConfig;
use planmcts::world::{generate, GeneratorParams, RestoreMode};

#[derive(Parser)]
#[command(name = "planmcts", version, about = "Plan-space tree search experiment runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one variant over a task batch.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// PlanMCTS, PlanSearch, ActionMCTS, ActionSearch or an ablation label.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Run several variants on the same batch and emit a comparison.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated variants; the first is the baseline.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
    },
    /// Run the reward-design and refinement ablations.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Write a generated environment file.
    GenEnv(GenArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Adapter {
    Scripted,
    Llm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Restore {
    Snapshot,
    Replay,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Environment file, `fixture:<name>` or `gen:b=..,d=..,v=..,rho=..,seeds=a..b`.
    #[arg(long, value_delimiter = ';')]
    env: Vec<String>,
    /// Restrict to these task ids.
    #[arg(long, value_delimiter = ',')]
    tasks: Vec<String>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    c: Option<f64>,
    /// Episode seeds, e.g. `0..19` or `1,4,7..9`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum)]
    adapter: Option<Adapter>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Error rate of the scripted operator.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    restore: Option<Restore>,
    /// Keep searching after the first verified answer.
    #[arg(long)]
    exhaust_budget: bool,
    /// Keep full prompt texts and model exchanges in traces.
    #[arg(long)]
    verbose: bool,
    /// Scripted policy table for an environment, as `name=path`.
    #[arg(long = "table")]
    tables: Vec<String>,
}

/// Config file layout. Every field is optional and mirrors a flag.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    env: Vec<String>,
    tasks: Vec<String>,
    variant: Option<String>,
    variants: Vec<String>,
    budget: Option<usize>,
    depth: Option<usize>,
    width: Option<usize>,
    c: Option<f64>,
    seeds: Option<String>,
    jobs: Option<usize>,
    adapter: Option<Adapter>,
    out: Option<PathBuf>,
    epsilon: Option<f64>,
    restore: Option<Restore>,
    exhaust_budget: Option<bool>,
    verbose: Option<bool>,
    tables: BTreeMap<String, PathBuf>,
    /// Base search configuration; individual flags above override it.
    search: Option<SearchConfig>,
    llm: Option<AdapterConfig>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 10)]
    branching: usize,
    #[arg(long, default_value_t = 5)]
    depth: usize,
    #[arg(long, default_value_t = 1)]
    valid_paths: usize,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    impossible: bool,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Resolved {
    file: FileConfig,
    envs: Vec<EnvSpec>,
    tasks: Vec<String>,
    seeds: Vec<u64>,
    jobs: usize,
    out: PathBuf,
    config: SearchConfig,
    restore: RestoreMode,
    factory: Box<dyn PolicyFactory>,
}

fn resolve(a: CommonArgs) -> Result<Resolved> {
    let file: FileConfig = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => FileConfig::default(),
    };
    let env = if a.env.is_empty() { file.env.clone() } else { a.env };
    if env.is_empty() {
        bail!("no environment given (use --env)");
    }
    let envs = env.iter().map(|e| e.parse()).collect::<Result<Vec<EnvSpec>, _>>()?;
    let tasks = if a.tasks.is_empty() { file.tasks.clone() } else { a.tasks };
    let seeds = parse_seeds(a.seeds.as_deref().or(file.seeds.as_deref()).unwrap_or("0"))?;

    let mut config = file.search.clone().unwrap_or_default();
    if let Some(v) = a.budget.or(file.budget) {
        config.budget = v;
    }
    if let Some(v) = a.depth.or(file.depth) {
        config.max_depth = v;
    }
    if let Some(v) = a.width.or(file.width) {
        config.branch_width = v;
    }
    if let Some(v) = a.c.or(file.c) {
        config.c = v;
    }
    config.exhaust_budget |= a.exhaust_budget || file.exhaust_budget.unwrap_or(false);
    config.verbose |= a.verbose || file.verbose.unwrap_or(false);
    config.validate()?;

    let restore = match a.restore.or(file.restore).unwrap_or(Restore::Snapshot) {
        Restore::Snapshot => RestoreMode::Snapshot,
        Restore::Replay => RestoreMode::Replay,
    };
    let factory: Box<dyn PolicyFactory> = match a.adapter.or(file.adapter).unwrap_or(Adapter::Scripted) {
        Adapter::Scripted => {
            let epsilon = a.epsilon.or(file.epsilon).unwrap_or(0.0);
            if !(0.0..=1.0).contains(&epsilon) {
                bail!("epsilon must lie in [0, 1]");
            }
            let mut f = ScriptedFactory::new(epsilon, config.macro_samples);
            let mut tables = file.tables.clone();
            for t in &a.tables {
                let (name, path) = t.split_once('=').context("--table expects name=path")?;
                tables.insert(name.to_string(), PathBuf::from(path));
            }
            for (name, path) in tables {
                let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                f = f.with_table(name, PolicyTable::from_json(&text)?);
            }
            Box::new(f)
        }
        Adapter::Llm => {
            let cfg = file.llm.clone().unwrap_or_default();
            let client = ChatClient::new(cfg, Arc::new(UsageMeter::default()))?;
            Box::new(LlmFactory::new(Arc::new(client)).recording(config.verbose))
        }
    };
    Ok(Resolved {
        envs,
        tasks,
        seeds,
        jobs: a.jobs.or(file.jobs).unwrap_or(1),
        out: a.out.or(file.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
        config,
        restore,
        factory,
        file,
    })
}

fn run_variants(r: &Resolved, variants: &[VariantSpec]) -> Result<Vec<BatchReport>> {
    let mut graphs = Vec::new();
    for e in &r.envs {
        graphs.extend(e.load()?);
    }
    let only = (!r.tasks.is_empty()).then_some(r.tasks.as_slice());
    let tasks = collect_tasks(&graphs, only)?;
    let mut reports = Vec::new();
    for v in variants {
        let spec = BatchSpec {
            tasks: tasks.clone(),
            seeds: r.seeds.clone(),
            variant: v.clone(),
            config: r.config.clone(),
            jobs: r.jobs,
            restore: r.restore,
        };
        let report = run_batch(&spec, r.factory.as_ref())?;
        let m = &report.metrics;
        eprintln!(
            "{:<22} episodes {:>4}  SR {:>6.2}%  interactions {:>8.2}  path {:>6}  budget util {:>6.2}%",
            report.variant,
            m.episodes,
            m.success_rate,
            m.action_interactions,
            m.path_length.map(|p| format!("{p:.2}")).unwrap_or_else(|| "-".into()),
            m.budget_utilization
        );
        reports.push(report);
    }
    Ok(reports)
}

fn write_json(path: &Path, text: &str) -> Result<()> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Command::Run { common, variant } => {
            let r = resolve(common)?;
            let name = variant.or(r.file.variant.clone()).unwrap_or_else(|| "PlanMCTS".into());
            let reports = run_variants(&r, &[variant_by_name(&name)?])?;
            write_outputs(&r.out, &reports.iter().collect::<Vec<_>>())?;
        }
        Command::Compare { common, variants } => {
            let r = resolve(common)?;
            let names = if !variants.is_empty() {
                variants
            } else if !r.file.variants.is_empty() {
                r.file.variants.clone()
            } else {
                VariantKind::ALL.iter().map(|k| k.to_string()).collect()
            };
            let specs = names.iter().map(|n| variant_by_name(n)).collect::<Result<Vec<_>, _>>()?;
            let reports = run_variants(&r, &specs)?;
            let refs: Vec<&BatchReport> = reports.iter().collect();
            write_outputs(&r.out, &refs)?;
            print!("{}", std::fs::read_to_string(r.out.join("comparison.csv"))?);
        }
        Command::Ablate { common } => {
            let r = resolve(common)?;
            let ablations = ablation_variants();
            let specs: Vec<VariantSpec> = ablations.iter().map(|(_, v)| v.clone()).collect();
            let reports = run_variants(&r, &specs)?;
            let refs: Vec<&BatchReport> = reports.iter().collect();
            write_outputs(&r.out, &refs)?;
            let rows: Vec<_> = ablations.iter().map(|(g, _)| *g).zip(reports.iter()).collect();
            let table = ablation_csv(&rows)?;
            write_json(&r.out.join("ablation.csv"), &table)?;
            print!("{table}");
        }
        Command::GenEnv(g) => {
            let params = GeneratorParams {
                branching: g.branching,
                depth: g.depth,
                valid_paths: g.valid_paths,
                distractor_ratio: g.rho,
                seed: g.seed,
                impossible: g.impossible,
            };
            let json = generate(&params)?.to_json();
            match g.out {
                Some(p) => write_json(&p, &json)?,
                None => println!("{json}"),
            }
        }
    }
    Ok(())
}
