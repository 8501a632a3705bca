//! Episode protocol, agents, metrics and evaluation reports.

pub mod train;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::history::DEFAULT_K;
use crate::agent::{
    build_context, decode_action, encode_action, AttemptOutcome, EnvAction, EpisodeRecord, History,
    Token, TokenSeq, Trajectory,
};
use crate::error::{Error, Result};
use crate::planner::{plan, random_action, PlannerConfig};
use crate::policy::{ContextReader, PolicyParams};
use crate::seed::{derive, label};
use crate::sim::{generate_tasks, EnvKind, Observation, OutcomeCache, Task};
use crate::worldmodel::WMParams;

/// Attempts at which cumulative success is reported.
pub const REPORT_ATTEMPTS: [usize; 4] = [1, 4, 7, 10];
pub const REPORT_SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Mock,
    PolicyOnly,
    Full,
}

impl AgentKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mock" => Some(AgentKind::Mock),
            "policy-only" | "policy" => Some(AgentKind::PolicyOnly),
            "full" => Some(AgentKind::Full),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Mock => "mock",
            AgentKind::PolicyOnly => "policy-only",
            AgentKind::Full => "full",
        }
    }
}

/// A decision maker for one attempt.
#[derive(Clone, Debug)]
pub enum Agent<'a> {
    /// Uniform over the enumerable action space.
    Mock,
    /// One sample from the policy.
    Policy {
        params: &'a PolicyParams,
        temperature: f64,
        top_p: f64,
    },
    /// Policy candidates searched with the world model.
    Full {
        policy: &'a PolicyParams,
        wm: &'a WMParams,
        planner: &'a PlannerConfig,
    },
}

/// What the agent produced for one attempt.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub action: Option<EnvAction>,
    pub tokens: Vec<Token>,
    pub logprobs: Vec<f64>,
    pub error: Option<String>,
}

impl Decision {
    fn of_action(action: EnvAction) -> Self {
        let tokens = encode_action(&action);
        let logprobs = vec![0.0; tokens.len()];
        Decision {
            action: Some(action),
            tokens,
            logprobs,
            error: None,
        }
    }

    fn failed(error: String) -> Self {
        Decision {
            action: None,
            tokens: Vec::new(),
            logprobs: Vec::new(),
            error: Some(error),
        }
    }
}

impl Agent<'_> {
    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Mock => AgentKind::Mock,
            Agent::Policy { .. } => AgentKind::PolicyOnly,
            Agent::Full { .. } => AgentKind::Full,
        }
    }

    /// Chooses an action. Agent-side errors become a decision without an action.
    pub fn decide(&self, obs: &Observation, history: &History, seed: u64) -> Decision {
        match self {
            Agent::Mock => {
                Decision::of_action(random_action(obs, &mut ChaCha8Rng::seed_from_u64(seed)))
            }
            Agent::Policy {
                params,
                temperature,
                top_p,
            } => {
                let sampled = ContextReader::from_tokens(&build_context(history, obs).tokens)
                    .and_then(|reader| {
                        params.sample_turn(
                            &reader,
                            *temperature,
                            *top_p,
                            &mut ChaCha8Rng::seed_from_u64(seed),
                        )
                    });
                match sampled {
                    Err(e) => Decision::failed(e.to_string()),
                    Ok(s) => {
                        let decoded = if s.truncated {
                            Err(Error::Decode("generation truncated".into()))
                        } else {
                            decode_action(&s.tokens)
                        };
                        let (action, error) = match decoded {
                            Ok(a) => (Some(a), None),
                            Err(e) => (None, Some(e.to_string())),
                        };
                        Decision {
                            action,
                            tokens: s.tokens,
                            logprobs: s.logprobs,
                            error,
                        }
                    }
                }
            }
            Agent::Full {
                policy,
                wm,
                planner,
            } => match plan(obs, history, policy, wm, planner, seed) {
                Ok(r) => Decision::of_action(r.action),
                Err(e) => Decision::failed(e.to_string()),
            },
        }
    }
}

/// Up to `k` attempts with the growing failure history in context.
pub fn run_episode(
    task: &Task,
    agent: &Agent,
    k: usize,
    seed: u64,
    cache: &mut OutcomeCache,
) -> Result<EpisodeRecord> {
    if k == 0 {
        return Err(Error::Config("attempt limit must be at least 1".into()));
    }
    let obs = task.observation();
    let mut history = History::new(task.id.clone());
    history.max_context = history.max_context.max(k - 1);
    let mut outcomes = Vec::with_capacity(k);
    for attempt in 0..k {
        let attempt_seed = derive(seed, &[attempt as u64]);
        let d = agent.decide(&obs, &history, attempt_seed);
        let (success, error) = match &d.action {
            Some(a) => match cache.outcome(task, a) {
                Ok(ok) => (ok, d.error.clone()),
                Err(e) => (false, Some(e.to_string())),
            },
            None => (false, d.error.clone()),
        };
        let reward = u8::from(success);
        outcomes.push(AttemptOutcome {
            action: d.action.clone(),
            reward,
            error,
        });
        if success {
            break;
        }
        let mut token_seq = TokenSeq::new();
        token_seq.begin_turn();
        for &t in &d.tokens {
            token_seq.push_generated(t);
        }
        history.push(Trajectory {
            task_id: task.id.clone(),
            observations: Vec::new(),
            action: d.action,
            token_seq,
            reward,
            old_logprobs: d.logprobs,
            seed: attempt_seed,
        })?;
    }
    let solved = outcomes.last().is_some_and(|o| o.reward == 1);
    Ok(EpisodeRecord {
        task_id: task.id.clone(),
        attempts_used: outcomes.len(),
        solved,
        outcomes,
    })
}

/// Metrics of one run over a task set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub seed: u64,
    pub tasks: usize,
    /// Cumulative success rate at each of `REPORT_ATTEMPTS`.
    pub success_rate: Vec<f64>,
    /// Mean attempts over solved episodes; `None` if none was solved.
    pub avg_attempts: Option<f64>,
}

/// Cumulative success rates at the given attempts and mean attempts over solved episodes.
pub fn aggregate(episodes: &[EpisodeRecord], at: &[usize]) -> (Vec<f64>, Option<f64>) {
    let n = episodes.len().max(1) as f64;
    let sr = at
        .iter()
        .map(|&a| {
            episodes
                .iter()
                .filter(|e| e.solved && e.attempts_used <= a)
                .count() as f64
                / n
        })
        .collect();
    let solved: Vec<usize> = episodes
        .iter()
        .filter(|e| e.solved)
        .map(|e| e.attempts_used)
        .collect();
    let avg =
        (!solved.is_empty()).then(|| solved.iter().sum::<usize>() as f64 / solved.len() as f64);
    (sr, avg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub schema: u32,
    pub agent: AgentKind,
    pub k: usize,
    pub attempts: Vec<usize>,
    pub runs: Vec<RunMetrics>,
    pub mean_success_rate: Vec<f64>,
    pub mean_avg_attempts: Option<f64>,
}

impl ResultsTable {
    pub fn from_runs(agent: AgentKind, k: usize, runs: Vec<RunMetrics>) -> Self {
        let attempts: Vec<usize> = REPORT_ATTEMPTS
            .iter()
            .copied()
            .filter(|&a| a <= k)
            .chain((!REPORT_ATTEMPTS.contains(&k)).then_some(k))
            .collect();
        let n = runs.len().max(1) as f64;
        let mean_success_rate = (0..attempts.len())
            .map(|i| runs.iter().map(|r| r.success_rate[i]).sum::<f64>() / n)
            .collect();
        let avgs: Vec<f64> = runs.iter().filter_map(|r| r.avg_attempts).collect();
        let mean_avg_attempts =
            (!avgs.is_empty()).then(|| avgs.iter().sum::<f64>() / avgs.len() as f64);
        ResultsTable {
            schema: REPORT_SCHEMA,
            agent,
            k,
            attempts,
            runs,
            mean_success_rate,
            mean_avg_attempts,
        }
    }

    /// Mean success rate at attempt `k` (the last column).
    pub fn final_success_rate(&self) -> f64 {
        *self.mean_success_rate.last().unwrap_or(&0.0)
    }

    pub fn render(&self) -> String {
        let mut s = format!("agent: {}  K={}\n", self.agent.name(), self.k);
        s.push_str("| run |");
        for a in &self.attempts {
            s.push_str(&format!(" Att. {a} |"));
        }
        s.push_str(" Avg. Att. |\n|-----|");
        for _ in &self.attempts {
            s.push_str("--------|");
        }
        s.push_str("-----------|\n");
        let fmt_avg = |a: Option<f64>| a.map_or("-".to_string(), |v| format!("{v:.2}"));
        for r in &self.runs {
            s.push_str(&format!("| {} |", r.run));
            for v in &r.success_rate {
                s.push_str(&format!(" {:.1}% |", 100.0 * v));
            }
            s.push_str(&format!(" {} |\n", fmt_avg(r.avg_attempts)));
        }
        s.push_str("| mean |");
        for v in &self.mean_success_rate {
            s.push_str(&format!(" {:.1}% |", 100.0 * v));
        }
        s.push_str(&format!(" {} |\n", fmt_avg(self.mean_avg_attempts)));
        s
    }
}

/// Side-by-side table of two evaluations under the same seeds.
pub fn compare(name_a: &str, a: &ResultsTable, name_b: &str, b: &ResultsTable) -> String {
    let mut s = String::from("| variant |");
    for at in &a.attempts {
        s.push_str(&format!(" Att. {at} |"));
    }
    s.push_str(" Avg. Att. |\n|---------|");
    for _ in &a.attempts {
        s.push_str("--------|");
    }
    s.push_str("-----------|\n");
    for (name, t) in [(name_a, a), (name_b, b)] {
        s.push_str(&format!("| {name} |"));
        for v in &t.mean_success_rate {
            s.push_str(&format!(" {:.1}% |", 100.0 * v));
        }
        s.push_str(&format!(
            " {} |\n",
            t.mean_avg_attempts
                .map_or("-".to_string(), |v| format!("{v:.2}"))
        ));
    }
    s
}

/// One episode line of the evaluation log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLine {
    pub run: usize,
    pub seed: u64,
    pub episode: EpisodeRecord,
}

/// `runs` passes of `agent` over `tasks`; run seeds derive from `seed` and
/// the run index, episode seeds from the run seed and the task id.
pub fn evaluate_tasks(
    tasks: &[Task],
    agent: &Agent,
    k: usize,
    runs: usize,
    seed: u64,
    cache: &mut OutcomeCache,
) -> Result<(ResultsTable, Vec<EpisodeLine>)> {
    if tasks.is_empty() {
        return Err(Error::Config("evaluation needs at least one task".into()));
    }
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let mut order: Vec<&Task> = tasks.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let mut lines = Vec::new();
    let mut metrics = Vec::new();
    let probe = ResultsTable::from_runs(agent.kind(), k, Vec::new());
    for run in 0..runs {
        let run_seed = derive(seed, &[run as u64]);
        let mut episodes = Vec::with_capacity(order.len());
        for task in &order {
            let s = derive(run_seed, &[label(&task.id)]);
            let e = run_episode(task, agent, k, s, cache)?;
            lines.push(EpisodeLine {
                run,
                seed: s,
                episode: e.clone(),
            });
            episodes.push(e);
        }
        let (success_rate, avg_attempts) = aggregate(&episodes, &probe.attempts);
        metrics.push(RunMetrics {
            run,
            seed: run_seed,
            tasks: episodes.len(),
            success_rate,
            avg_attempts,
        });
    }
    Ok((ResultsTable::from_runs(agent.kind(), k, metrics), lines))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskSetConfig {
    pub count: usize,
    pub seed: u64,
}

impl Default for TaskSetConfig {
    fn default() -> Self {
        TaskSetConfig { count: 20, seed: 0 }
    }
}

/// Evaluation settings, echoed into every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub env: EnvKind,
    pub tasks: TaskSetConfig,
    pub agent: AgentKind,
    pub k: usize,
    pub runs: usize,
    pub seed: u64,
    pub temperature: f64,
    pub top_p: f64,
    pub planner: PlannerConfig,
    pub policy_checkpoint: Option<PathBuf>,
    pub wm_checkpoint: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvKind::GridDrop,
            tasks: TaskSetConfig::default(),
            agent: AgentKind::Mock,
            k: DEFAULT_K,
            runs: 3,
            seed: 0,
            temperature: 0.7,
            top_p: 0.95,
            planner: PlannerConfig::default(),
            policy_checkpoint: None,
            wm_checkpoint: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.runs == 0 || self.tasks.count == 0 {
            return Err(Error::Config(
                "k, runs and task count must be at least 1".into(),
            ));
        }
        match self.agent {
            AgentKind::Mock => {}
            AgentKind::PolicyOnly if self.policy_checkpoint.is_none() => {
                return Err(Error::Config(
                    "policy-only agent needs policy_checkpoint".into(),
                ));
            }
            AgentKind::Full if self.policy_checkpoint.is_none() || self.wm_checkpoint.is_none() => {
                return Err(Error::Config(
                    "full agent needs policy_checkpoint and wm_checkpoint".into(),
                ));
            }
            _ => {}
        }
        self.planner.validate()
    }
}

fn read_checkpoint(path: &Option<PathBuf>) -> Result<String> {
    let p = path
        .as_ref()
        .ok_or_else(|| Error::Config("missing checkpoint path".into()))?;
    fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub config: RunConfig,
    pub table: ResultsTable,
}

pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "table.txt";
pub const EPISODES_FILE: &str = "episodes.jsonl";

/// Generates the task set, runs the configured agent and writes the report,
/// rendered table and per-episode log into the output directory.
pub fn evaluate(config: &RunConfig) -> Result<Report> {
    config.validate()?;
    let tasks = generate_tasks(config.env, config.tasks.count, config.tasks.seed);
    if tasks.is_empty() {
        return Err(Error::Config("task generator produced no tasks".into()));
    }
    let policy = match config.agent {
        AgentKind::Mock => None,
        _ => Some(PolicyParams::from_checkpoint(&read_checkpoint(
            &config.policy_checkpoint,
        )?)?),
    };
    let wm = match config.agent {
        AgentKind::Full => Some(WMParams::from_checkpoint(&read_checkpoint(
            &config.wm_checkpoint,
        )?)?),
        _ => None,
    };
    let agent = match config.agent {
        AgentKind::Mock => Agent::Mock,
        AgentKind::PolicyOnly => Agent::Policy {
            params: policy.as_ref().expect("loaded"),
            temperature: config.temperature,
            top_p: config.top_p,
        },
        AgentKind::Full => Agent::Full {
            policy: policy.as_ref().expect("loaded"),
            wm: wm.as_ref().expect("loaded"),
            planner: &config.planner,
        },
    };
    let mut cache = OutcomeCache::new();
    let (table, lines) = evaluate_tasks(
        &tasks,
        &agent,
        config.k,
        config.runs,
        config.seed,
        &mut cache,
    )?;
    let report = Report {
        schema: REPORT_SCHEMA,
        config: config.clone(),
        table,
    };
    write_report(&report, &lines, &config.output_dir)?;
    Ok(report)
}

pub fn write_report(report: &Report, lines: &[EpisodeLine], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::File::create(dir.join(REPORT_FILE))?;
    serde_json::to_writer_pretty(&mut f, report)?;
    f.write_all(b"\n")?;
    fs::write(dir.join(TABLE_FILE), report.table.render())?;
    let mut f = fs::File::create(dir.join(EPISODES_FILE))?;
    for l in lines {
        serde_json::to_writer(&mut f, l)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_report(path: &Path) -> Result<Report> {
    let r: Report = serde_json::from_str(&fs::read_to_string(path)?)?;
    if r.schema != REPORT_SCHEMA {
        return Err(Error::Format(format!(
            "unsupported report schema {}",
            r.schema
        )));
    }
    Ok(r)
}
