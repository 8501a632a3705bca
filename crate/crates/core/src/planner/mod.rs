//! Root-node PUCT search over policy samples, scored by the world model.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::action::GRID_CELLS;
use crate::agent::{build_context, decode_action, EnvAction, History, TimedEvent};
use crate::curation::sha256_hex;
use crate::error::{Error, Result};
use crate::policy::{ContextReader, PolicyParams};
use crate::seed::derive;
use crate::sim::generator::ENUM_MAX_TICK;
use crate::sim::{EnvKind, Observation};
use crate::worldmodel::{lcb_score, stability_score, strategy1_value, PerturbSpec, WMParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Predicted success blended with perturbation stability.
    Stability,
    /// Lower confidence bound over temperature-scaled predictions.
    Lcb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub samples: usize,
    pub budget: usize,
    pub c_puct: f64,
    pub lambda_puct: f64,
    pub neighbors: usize,
    pub lcb_samples: usize,
    pub lambda_lcb: f64,
    pub strategy: Strategy,
    pub stop_threshold: f64,
    pub stop_repeat: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub cold_start_uniform_first_pick: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            samples: 32,
            budget: 32,
            c_puct: 1.5,
            lambda_puct: 0.25,
            neighbors: 12,
            lcb_samples: 8,
            lambda_lcb: 0.2,
            strategy: Strategy::Stability,
            stop_threshold: 0.8,
            stop_repeat: 3,
            temperature: 0.7,
            top_p: 0.95,
            cold_start_uniform_first_pick: false,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 || self.budget == 0 {
            return Err(Error::Config(
                "samples and budget must be at least 1".into(),
            ));
        }
        if !(self.c_puct >= 0.0) {
            return Err(Error::Config("c_puct must be non-negative".into()));
        }
        if self.lcb_samples < 2 {
            return Err(Error::Config("LCB needs at least two temperatures".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda_puct) {
            return Err(Error::Config("lambda_puct must lie in [0, 1]".into()));
        }
        if self.stop_repeat == 0 {
            return Err(Error::Config("stop_repeat must be at least 1".into()));
        }
        Ok(())
    }
}

/// Candidates with their frequency prior and running statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    pub actions: Vec<EnvAction>,
    pub prior: Vec<f64>,
    pub visits: Vec<u32>,
    pub q: Vec<f64>,
    pub last: Option<usize>,
    pub n_same: usize,
}

impl SearchState {
    /// Unique actions in order of first appearance, prior proportional to count.
    pub fn from_samples(samples: &[EnvAction]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("search needs at least one candidate".into()));
        }
        let mut actions: Vec<EnvAction> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for a in samples {
            match actions.iter().position(|b| b == a) {
                Some(i) => counts[i] += 1,
                None => {
                    actions.push(a.clone());
                    counts.push(1);
                }
            }
        }
        let n = samples.len() as f64;
        let prior = counts.iter().map(|&c| c as f64 / n).collect();
        Ok(Self::with_prior(actions, prior))
    }

    pub fn with_prior(actions: Vec<EnvAction>, prior: Vec<f64>) -> Self {
        let n = actions.len();
        SearchState {
            actions,
            prior,
            visits: vec![0; n],
            q: vec![0.0; n],
            last: None,
            n_same: 0,
        }
    }

    pub fn total_visits(&self) -> u32 {
        self.visits.iter().sum()
    }

    /// Hex digest of the (Q, N) table.
    pub fn table_hash(&self) -> String {
        let mut s = String::new();
        for (q, n) in self.q.iter().zip(&self.visits) {
            s.push_str(&format!("{q:?}:{n};"));
        }
        sha256_hex(s.as_bytes())[..16].to_string()
    }

    /// Index maximizing `Q`; ties go to the earliest candidate.
    pub fn best(&self) -> usize {
        let mut best = 0;
        for i in 1..self.q.len() {
            if self.q[i] > self.q[best] {
                best = i;
            }
        }
        best
    }
}

/// PUCT value of candidate `i`.
pub fn puct_value(state: &SearchState, i: usize, c_puct: f64, n_total: f64) -> f64 {
    state.q[i] + c_puct * state.prior[i] * n_total.sqrt() / (1.0 + state.visits[i] as f64)
}

/// Argmax of the PUCT criterion; ties go to the earliest candidate.
pub fn puct_select(state: &SearchState, c_puct: f64) -> usize {
    let n_total = state.total_visits() as f64;
    select_among(state, c_puct, n_total, &vec![true; state.actions.len()])
        .expect("at least one candidate")
}

fn select_among(state: &SearchState, c_puct: f64, n_total: f64, allowed: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in (0..state.actions.len()).filter(|&i| allowed[i]) {
        let v = puct_value(state, i, c_puct, n_total);
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Running-average update of `Q(i)` with score `v`.
pub fn update_stats(state: &mut SearchState, i: usize, v: f64) {
    let n = state.visits[i] as f64;
    state.q[i] = (state.q[i] * n + v) / (n + 1.0);
    state.visits[i] += 1;
}

/// Value used for PUCT and the success estimate used for early stopping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub v: f64,
    pub mu: f64,
}

pub trait Scorer {
    fn score(&self, obs: &Observation, action: &EnvAction, seed: u64) -> Result<Score>;
}

/// Scores actions with a world-model checkpoint.
pub struct WorldModelScorer<'a> {
    pub params: &'a WMParams,
    pub config: &'a PlannerConfig,
}

impl Scorer for WorldModelScorer<'_> {
    fn score(&self, obs: &Observation, action: &EnvAction, seed: u64) -> Result<Score> {
        score(self.params, obs, action, self.config, seed)
    }
}

/// Strategy 1: blended success and stability. Strategy 2: LCB over temperatures.
pub fn score(
    wm: &WMParams,
    obs: &Observation,
    action: &EnvAction,
    config: &PlannerConfig,
    seed: u64,
) -> Result<Score> {
    match config.strategy {
        Strategy::Stability => {
            let p = wm.predict(obs, action, 1.0)?.p_succ;
            let stab = stability_score(
                wm,
                obs,
                action,
                PerturbSpec::for_env(obs.env),
                config.neighbors,
                seed,
            )?;
            Ok(Score {
                v: strategy1_value(p, stab.p_stab, config.lambda_puct),
                mu: p,
            })
        }
        Strategy::Lcb => {
            let s = lcb_score(wm, obs, action, config.lcb_samples, config.lambda_lcb, seed)?;
            Ok(Score {
                v: s.score,
                mu: s.mean,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Repeat,
    Confident,
    Budget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub action: EnvAction,
    pub v: Option<f64>,
    pub mu: Option<f64>,
    pub table_hash: String,
    pub stop: Option<StopReason>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchResult {
    pub action: EnvAction,
    pub state: SearchState,
    pub trace: Vec<TraceEntry>,
    pub stop: StopReason,
    pub score_calls: usize,
}

/// Runs the root-node loop on a prepared state.
pub fn search(
    mut state: SearchState,
    obs: &Observation,
    scorer: &dyn Scorer,
    config: &PlannerConfig,
    seed: u64,
) -> Result<SearchResult> {
    config.validate()?;
    if state.actions.is_empty() {
        return Err(Error::Config("search needs at least one candidate".into()));
    }
    let score_seed = derive(seed, &[1]);
    let mut memo: Vec<Option<std::result::Result<Score, String>>> = vec![None; state.actions.len()];
    let mut trace = Vec::new();
    let mut score_calls = 0;
    let mut stop = StopReason::Budget;
    for iteration in 1..=config.budget {
        // Candidates whose scoring failed are not selected again.
        let allowed: Vec<bool> = memo.iter().map(|m| !matches!(m, Some(Err(_)))).collect();
        let n_total = state.total_visits() as f64;
        let n_total = if config.cold_start_uniform_first_pick {
            n_total.max(1.0)
        } else {
            n_total
        };
        let Some(i) = select_among(&state, config.c_puct, n_total, &allowed) else {
            break;
        };
        if state.last == Some(i) {
            state.n_same += 1;
        } else {
            state.last = Some(i);
            state.n_same = 1;
        }
        let mut entry = TraceEntry {
            iteration,
            action: state.actions[i].clone(),
            v: None,
            mu: None,
            table_hash: String::new(),
            stop: None,
            error: None,
        };
        if state.n_same >= config.stop_repeat {
            stop = StopReason::Repeat;
            entry.stop = Some(stop);
            entry.table_hash = state.table_hash();
            trace.push(entry);
            break;
        }
        let result = match &memo[i] {
            Some(r) => r.clone(),
            None => {
                score_calls += 1;
                let r = scorer
                    .score(obs, &state.actions[i], score_seed)
                    .map_err(|e| e.to_string());
                memo[i] = Some(r.clone());
                r
            }
        };
        match result {
            Ok(s) => {
                update_stats(&mut state, i, s.v);
                entry.v = Some(s.v);
                entry.mu = Some(s.mu);
                if s.mu > config.stop_threshold {
                    stop = StopReason::Confident;
                    entry.stop = Some(stop);
                }
            }
            Err(e) => entry.error = Some(e),
        }
        entry.table_hash = state.table_hash();
        let done = entry.stop.is_some();
        trace.push(entry);
        if done {
            break;
        }
    }
    if let Some(last) = trace.last_mut() {
        if stop == StopReason::Budget {
            last.stop = Some(StopReason::Budget);
        }
    }
    let usable: Vec<usize> = (0..state.actions.len())
        .filter(|&i| !matches!(memo[i], Some(Err(_))))
        .collect();
    let best = usable
        .iter()
        .copied()
        .fold(None, |b: Option<usize>, i| match b {
            Some(j) if state.q[j] >= state.q[i] => Some(j),
            _ => Some(i),
        });
    let action = state.actions[best.unwrap_or_else(|| state.best())].clone();
    Ok(SearchResult {
        action,
        state,
        trace,
        stop,
        score_calls,
    })
}

/// Whether `action` is well formed for the observed scene.
pub fn action_fits(obs: &Observation, action: &EnvAction) -> bool {
    match (obs.env, action) {
        (EnvKind::GridDrop, EnvAction::GridPlace { .. }) => true,
        (EnvKind::TimedRemove, EnvAction::EventSeq(events)) => {
            let ids = obs.removable_ids();
            events.iter().all(|e| ids.contains(&e.index))
        }
        _ => false,
    }
}

/// Uniform draw from the enumerable action space of the observed scene.
pub fn random_action(obs: &Observation, rng: &mut impl Rng) -> EnvAction {
    match obs.env {
        EnvKind::GridDrop => EnvAction::GridPlace {
            cell: rng.gen_range(1..=GRID_CELLS),
            radius: rng.gen_range(1..=8),
        },
        EnvKind::TimedRemove => {
            let events = obs
                .removable_ids()
                .into_iter()
                .filter_map(|index| {
                    let slot = rng.gen_range(0..=ENUM_MAX_TICK + 1);
                    (slot > 0).then(|| TimedEvent {
                        index,
                        tick: slot - 1,
                    })
                })
                .collect();
            EnvAction::events(events).expect("removable ids are unique")
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidates {
    pub state: SearchState,
    /// Samples that decoded to a valid action.
    pub valid: usize,
    pub fallback: bool,
}

/// Samples `config.samples` generations and builds the frequency prior.
/// With no valid sample, falls back to the greedy decode, then to a seeded
/// uniform action.
pub fn generate_candidates(
    policy: &PolicyParams,
    obs: &Observation,
    history: &History,
    config: &PlannerConfig,
    seed: u64,
) -> Result<Candidates> {
    let context = build_context(history, obs);
    let reader = ContextReader::from_tokens(&context.tokens)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, &[0]));
    let mut valid = Vec::new();
    for _ in 0..config.samples {
        let s = policy.sample_turn(&reader, config.temperature, config.top_p, &mut rng)?;
        if s.truncated {
            continue;
        }
        if let Ok(a) = decode_action(&s.tokens) {
            if action_fits(obs, &a) {
                valid.push(a);
            }
        }
    }
    if !valid.is_empty() {
        return Ok(Candidates {
            valid: valid.len(),
            state: SearchState::from_samples(&valid)?,
            fallback: false,
        });
    }
    let greedy = policy.greedy_turn(&reader)?;
    let action = match decode_action(&greedy.tokens) {
        Ok(a) if !greedy.truncated && action_fits(obs, &a) => a,
        _ => random_action(obs, &mut rng),
    };
    Ok(Candidates {
        valid: 0,
        state: SearchState::from_samples(&[action])?,
        fallback: true,
    })
}

/// Full inference step: sample candidates, search, return the chosen action.
pub fn plan(
    obs: &Observation,
    history: &History,
    policy: &PolicyParams,
    wm: &WMParams,
    config: &PlannerConfig,
    seed: u64,
) -> Result<SearchResult> {
    let c = generate_candidates(policy, obs, history, config, seed)?;
    search(
        c.state,
        obs,
        &WorldModelScorer { params: wm, config },
        config,
        seed,
    )
}

pub fn write_trace<W: Write>(mut w: W, trace: &[TraceEntry]) -> Result<()> {
    for t in trace {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
