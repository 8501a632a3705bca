use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use icprl::agent::History;
use icprl::curation::{curate_dataset, dataset_path, load_dataset, CurationConfig, Labeler};
use icprl::harness::train::{
    examples, split_by_task, train_policy, train_world_model, PolicyTrainConfig,
};
use icprl::harness::{compare, evaluate, load_report, AgentKind, RunConfig, TABLE_FILE};
use icprl::planner::{plan, write_trace, PlannerConfig, Strategy};
use icprl::policy::PolicyParams;
use icprl::sim::{generate_tasks, EnvKind, Task};
use icprl::worldmodel::{calibration_report, WMParams, WmTrainConfig};

/// Overrides the default output location of every subcommand.
const OUT_ENV: &str = "ICPRL_OUT";

#[derive(Parser)]
#[command(
    name = "icprl",
    version,
    about = "In-context physical reasoning agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a task suite and write it as JSON lines.
    GenTasks {
        #[arg(long, value_enum, default_value = "griddrop")]
        env: Env,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a balanced world-model dataset.
    Curate {
        #[command(flatten)]
        tasks: TaskArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        labeler: Option<LabelerArg>,
        #[arg(long)]
        eps_div: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a world model on a curated dataset.
    TrainWm {
        /// Dataset directory or dataset file.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Fraction of tasks held out for the calibration report.
        #[arg(long, default_value_t = 0.0)]
        holdout: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the policy with turn-aware GRPO.
    TrainPolicy {
        #[command(flatten)]
        tasks: TaskArgs,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Per-iteration metrics log (JSON lines).
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run episodes and write a report.
    Eval(EvalArgs),
    /// Make one planned decision and dump the search trace.
    Plan {
        #[command(flatten)]
        tasks: TaskArgs,
        /// Index of the task within the suite.
        #[arg(long, default_value_t = 0)]
        task: usize,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        wm: PathBuf,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Print a report table, or compare two reports.
    Report {
        report: PathBuf,
        /// Second report to compare against.
        #[arg(long)]
        compare: Option<PathBuf>,
        /// Row names for the comparison, as `first,second`.
        #[arg(long)]
        names: Option<String>,
    },
}

#[derive(Args)]
struct TaskArgs {
    /// Task suite written by gen-tasks; overrides the generator flags.
    #[arg(long)]
    tasks_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "griddrop")]
    env: Env,
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    task_seed: u64,
}

impl TaskArgs {
    fn load(&self) -> Result<Vec<Task>> {
        let tasks = match &self.tasks_file {
            Some(p) => read_tasks(p)?,
            None => generate_tasks(self.env.into(), self.count, self.task_seed),
        };
        if tasks.is_empty() {
            bail!("task set is empty");
        }
        Ok(tasks)
    }
}

#[derive(Args)]
struct EvalArgs {
    /// TOML run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    agent: Option<AgentArg>,
    #[arg(long, value_enum)]
    env: Option<Env>,
    /// Number of generated tasks.
    #[arg(long)]
    tasks: Option<usize>,
    #[arg(long)]
    task_seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long)]
    wm: Option<PathBuf>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Env {
    #[value(alias = "grid-drop")]
    Griddrop,
    #[value(alias = "timed-remove")]
    Timedremove,
}

impl From<Env> for EnvKind {
    fn from(e: Env) -> Self {
        match e {
            Env::Griddrop => EnvKind::GridDrop,
            Env::Timedremove => EnvKind::TimedRemove,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AgentArg {
    Mock,
    #[value(alias = "policy")]
    PolicyOnly,
    Full,
}

impl From<AgentArg> for AgentKind {
    fn from(a: AgentArg) -> Self {
        match a {
            AgentArg::Mock => AgentKind::Mock,
            AgentArg::PolicyOnly => AgentKind::PolicyOnly,
            AgentArg::Full => AgentKind::Full,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelerArg {
    FiveFrame,
    TerminalOnly,
}

impl From<LabelerArg> for Labeler {
    fn from(l: LabelerArg) -> Self {
        match l {
            LabelerArg::FiveFrame => Labeler::FiveFrame,
            LabelerArg::TerminalOnly => Labeler::TerminalOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Stability,
    Lcb,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Stability => Strategy::Stability,
            StrategyArg::Lcb => Strategy::Lcb,
        }
    }
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load_toml<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("malformed config {}", p.display()))
        }
    }
}

fn read_tasks(path: &Path) -> Result<Vec<Task>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut tasks = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        tasks.push(
            serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?,
        );
    }
    Ok(tasks)
}

fn read_checkpoint(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("missing checkpoint {}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenTasks {
            env,
            count,
            seed,
            out,
        } => {
            let tasks = generate_tasks(env.into(), count, seed);
            let path = out.unwrap_or_else(|| out_root().join("tasks.jsonl"));
            let mut text = String::new();
            for t in &tasks {
                text.push_str(&serde_json::to_string(t)?);
                text.push('\n');
            }
            write_file(&path, &text)?;
            println!("wrote {} tasks to {}", tasks.len(), path.display());
        }
        Command::Curate {
            tasks,
            config,
            labeler,
            eps_div,
            seed,
            out,
        } => {
            let mut cfg: CurationConfig = load_toml(config.as_deref())?;
            if let Some(l) = labeler {
                cfg.labeler = l.into();
            }
            if let Some(e) = eps_div {
                cfg.eps_div = e;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out.unwrap_or_else(|| out_root().join("dataset"));
            let manifest = curate_dataset(&tasks.load()?, &cfg, &dir)?;
            for t in manifest.tasks.iter().filter(|t| t.error.is_some()) {
                eprintln!(
                    "skipped {}: {}",
                    t.task_id,
                    t.error.as_deref().unwrap_or_default()
                );
            }
            println!(
                "{} records ({} positive, {} negative) in {}\nsha256 {}",
                manifest.records,
                manifest.positives,
                manifest.negatives,
                dir.display(),
                manifest.content_hash
            );
        }
        Command::TrainWm {
            data,
            config,
            epochs,
            hidden,
            seed,
            holdout,
            out,
        } => {
            let mut cfg: WmTrainConfig = load_toml(config.as_deref())?;
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(h) = hidden {
                cfg.hidden = h;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if !(0.0..1.0).contains(&holdout) {
                bail!("--holdout must lie in [0, 1)");
            }
            let file = if data.is_dir() {
                dataset_path(&data)
            } else {
                data.clone()
            };
            let records = load_dataset(&file)?;
            let (train, test) = split_by_task(&records, holdout, cfg.seed);
            let (params, losses) = train_world_model(&train, &cfg)?;
            let path = out.unwrap_or_else(|| out_root().join("wm.ckpt"));
            write_file(&path, &params.to_checkpoint())?;
            println!(
                "trained on {} records, final loss {:.4}; wrote {}",
                train.len(),
                losses.last().copied().unwrap_or(f64::NAN),
                path.display()
            );
            if !test.is_empty() {
                let r = calibration_report(&params, &examples(&test), 10)?;
                println!(
                    "held-out {} records: accuracy {:.3}, label accuracy {:.3}, bce {:.4}",
                    r.examples, r.accuracy, r.label_accuracy, r.bce
                );
            }
        }
        Command::TrainPolicy {
            tasks,
            config,
            iterations,
            hidden,
            seed,
            metrics,
            out,
        } => {
            let mut cfg: PolicyTrainConfig = load_toml(config.as_deref())?;
            if let Some(i) = iterations {
                cfg.iterations = i;
            }
            if let Some(h) = hidden {
                cfg.hidden = h;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let tasks = tasks.load()?;
            let mut log = match &metrics {
                Some(p) => Some(BufWriter::new(
                    fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
                )),
                None => None,
            };
            let mut cache = icprl::sim::OutcomeCache::new();
            let (params, m) = train_policy(
                &tasks,
                &cfg,
                &mut cache,
                log.as_mut().map(|w| w as &mut dyn Write),
            )?;
            if let Some(mut w) = log {
                w.flush()?;
            }
            let path = out.unwrap_or_else(|| out_root().join("policy.ckpt"));
            write_file(&path, &params.to_checkpoint())?;
            let tail = &m[m.len().saturating_sub(100)..];
            let solve = tail.iter().map(|x| x.solve_rate).sum::<f64>() / tail.len().max(1) as f64;
            println!(
                "{} iterations on {} tasks, recent solve rate {:.3}; wrote {}",
                m.len(),
                tasks.len(),
                solve,
                path.display()
            );
        }
        Command::Eval(a) => {
            let mut cfg: RunConfig = load_toml(a.config.as_deref())?;
            if a.config.is_none() {
                cfg.output_dir = out_root().join("eval");
            }
            if let Some(x) = a.agent {
                cfg.agent = x.into();
            }
            if let Some(x) = a.env {
                cfg.env = x.into();
            }
            if let Some(x) = a.tasks {
                cfg.tasks.count = x;
            }
            if let Some(x) = a.task_seed {
                cfg.tasks.seed = x;
            }
            if let Some(x) = a.k {
                cfg.k = x;
            }
            if let Some(x) = a.runs {
                cfg.runs = x;
            }
            if let Some(x) = a.seed {
                cfg.seed = x;
            }
            if let Some(x) = a.policy {
                cfg.policy_checkpoint = Some(x);
            }
            if let Some(x) = a.wm {
                cfg.wm_checkpoint = Some(x);
            }
            if let Some(x) = a.strategy {
                cfg.planner.strategy = x.into();
            }
            if let Some(x) = a.out {
                cfg.output_dir = x;
            }
            for p in cfg.policy_checkpoint.iter().chain(&cfg.wm_checkpoint) {
                if !p.exists() {
                    bail!("missing checkpoint {}", p.display());
                }
            }
            let report = evaluate(&cfg)?;
            print!("{}", report.table.render());
            println!("report written to {}", cfg.output_dir.display());
        }
        Command::Plan {
            tasks,
            task,
            policy,
            wm,
            strategy,
            seed,
            trace,
        } => {
            let tasks = tasks.load()?;
            let task = tasks.get(task).with_context(|| {
                format!("task index {task} out of range ({} tasks)", tasks.len())
            })?;
            let policy = PolicyParams::from_checkpoint(&read_checkpoint(&policy)?)?;
            let wm = WMParams::from_checkpoint(&read_checkpoint(&wm)?)?;
            let mut cfg = PlannerConfig::default();
            if let Some(s) = strategy {
                cfg.strategy = s.into();
            }
            let result = plan(
                &task.observation(),
                &History::new(task.id.clone()),
                &policy,
                &wm,
                &cfg,
                seed,
            )?;
            if let Some(p) = &trace {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir)?;
                }
                let f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
                let mut w = BufWriter::new(f);
                write_trace(&mut w, &result.trace)?;
                w.flush()?;
            }
            println!(
                "task {}: {} after {} iterations ({:?}, {} scored)",
                task.id,
                result.action,
                result.trace.len(),
                result.stop,
                result.score_calls
            );
        }
        Command::Report {
            report,
            compare: other,
            names,
        } => {
            let a = load_report(&report)?;
            match other {
                None => {
                    print!("{}", a.table.render());
                    let table = report.with_file_name(TABLE_FILE);
                    if !table.exists() {
                        eprintln!("note: {} not found next to the report", TABLE_FILE);
                    }
                }
                Some(path) => {
                    let b = load_report(&path)?;
                    let (na, nb) = match names.as_deref().map(|s| s.split_once(',')) {
                        Some(Some((x, y))) => (x.to_string(), y.to_string()),
                        Some(None) => bail!("--names expects `first,second`"),
                        None => (variant_name(&report), variant_name(&path)),
                    };
                    if a.config.seed != b.config.seed || a.config.tasks != b.config.tasks {
                        eprintln!(
                            "warning: reports were produced with different seeds or task sets"
                        );
                    }
                    print!("{}", compare(&na, &a.table, &nb, &b.table));
                }
            }
        }
    }
    Ok(())
}

fn variant_name(report: &Path) -> String {
    report
        .parent()
        .and_then(|d| d.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| report.display().to_string())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
