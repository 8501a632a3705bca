use serde::{Deserialize, Serialize};

use super::action::EnvAction;
use super::tokens::{Token, TokenSeq};
use crate::error::{Error, Result};
use crate::sim::{Observation, OverlayKind};

/// Attempt limit per episode.
pub const DEFAULT_K: usize = 10;
/// Past attempts kept in the policy context.
pub const DEFAULT_MAX_CONTEXT: usize = DEFAULT_K - 1;

/// One attempt: what the agent saw, generated, and got back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub observations: Vec<Observation>,
    /// `None` when the generation did not decode.
    pub action: Option<EnvAction>,
    pub token_seq: TokenSeq,
    /// Sparse terminal reward, 0 or 1.
    pub reward: u8,
    /// Sampling-time log-probabilities of the generated tokens.
    pub old_logprobs: Vec<f64>,
    pub seed: u64,
}

impl Trajectory {
    /// Generated tokens, in order.
    pub fn generated(&self) -> Vec<Token> {
        self.token_seq
            .tokens
            .iter()
            .zip(&self.token_seq.loss_mask)
            .filter(|(_, &m)| m == 1)
            .map(|(&t, _)| t)
            .collect()
    }
}

/// Failed attempts so far on one task instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub task_id: String,
    pub attempts: Vec<Trajectory>,
    pub max_context: usize,
}

impl History {
    pub fn new(task_id: impl Into<String>) -> Self {
        Self {
            task_id: task_id.into(),
            attempts: Vec::new(),
            max_context: DEFAULT_MAX_CONTEXT,
        }
    }

    pub fn len(&self) -> usize {
        self.attempts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attempts.is_empty()
    }

    /// Appends a finished attempt. Only failed attempts of the same task may
    /// be followed by further attempts.
    pub fn push(&mut self, t: Trajectory) -> Result<()> {
        if t.task_id != self.task_id {
            return Err(Error::Consistency(format!(
                "attempt for task {} pushed onto history of {}",
                t.task_id, self.task_id
            )));
        }
        if self.attempts.last().is_some_and(|last| last.reward != 0) {
            return Err(Error::Consistency(
                "history already ends in a success".into(),
            ));
        }
        self.attempts.push(t);
        Ok(())
    }

    /// The most recent `max_context` attempts.
    pub fn window(&self) -> &[Trajectory] {
        let n = self.attempts.len();
        &self.attempts[n.saturating_sub(self.max_context)..]
    }

    pub fn failed_actions(&self) -> impl Iterator<Item = &EnvAction> {
        self.attempts
            .iter()
            .filter(|t| t.reward == 0)
            .filter_map(|t| t.action.as_ref())
    }
}

/// Observation tokens: one `ROLE [IDX] CELL` group per annotation.
pub fn observation_tokens(obs: &Observation) -> Vec<Token> {
    let mut out = Vec::with_capacity(3 * obs.annotations.len());
    for a in &obs.annotations {
        out.push(Token::role(a.role));
        if obs.overlay == OverlayKind::IndexIds {
            out.push(Token::idx(a.id));
        }
        out.push(Token::cell(a.cell));
    }
    out
}

/// `BOS obs.. OBS_END (GEN action.. OUTCOME)* GEN`, all mask 0, with an open
/// turn. A multi-turn rollout is the same layout with generated tokens in
/// place of the history, so every turn's context is a prefix of it.
pub fn build_context(history: &History, obs: &Observation) -> TokenSeq {
    let mut s = TokenSeq::new();
    s.push_context(Token::BOS);
    for t in observation_tokens(obs) {
        s.push_context(t);
    }
    s.push_context(Token::OBS_END);
    for attempt in history.window() {
        s.push_context(Token::GEN);
        for t in attempt.generated() {
            s.push_context(t);
        }
        s.push_context(if attempt.reward == 1 {
            Token::SUCCESS
        } else {
            Token::FAIL
        });
    }
    s.push_context(Token::GEN);
    s.begin_turn();
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttemptOutcome {
    pub action: Option<EnvAction>,
    pub reward: u8,
    /// Why the attempt could not be executed, if it could not.
    pub error: Option<String>,
}

/// Summary of one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub task_id: String,
    pub attempts_used: usize,
    pub solved: bool,
    pub outcomes: Vec<AttemptOutcome>,
}

impl EpisodeRecord {
    pub fn check(&self, k: usize) -> Result<()> {
        if self.attempts_used != self.outcomes.len() || self.attempts_used > k {
            return Err(Error::Consistency("attempt count mismatch".into()));
        }
        let last_ok = self.outcomes.last().is_some_and(|o| o.reward == 1);
        if self.solved != last_ok {
            return Err(Error::Consistency(
                "solved flag disagrees with last reward".into(),
            ));
        }
        if self.outcomes.iter().rev().skip(1).any(|o| o.reward != 0) {
            return Err(Error::Consistency(
                "episode continued after a success".into(),
            ));
        }
        Ok(())
    }
}

/// Line-oriented persistence record of one attempt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLine {
    pub task_id: String,
    pub tokens: Vec<u16>,
    pub mask: Vec<u8>,
    pub action: Option<EnvAction>,
    pub reward: u8,
    pub seed: u64,
}

impl From<&Trajectory> for TrajectoryLine {
    fn from(t: &Trajectory) -> Self {
        Self {
            task_id: t.task_id.clone(),
            tokens: t.token_seq.tokens.iter().map(|t| t.0).collect(),
            mask: t.token_seq.loss_mask.clone(),
            action: t.action.clone(),
            reward: t.reward,
            seed: t.seed,
        }
    }
}

pub fn write_trajectories<W: std::io::Write>(mut w: W, ts: &[Trajectory]) -> Result<()> {
    for t in ts {
        serde_json::to_writer(&mut w, &TrajectoryLine::from(t))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trajectory_lines(text: &str) -> Result<Vec<TrajectoryLine>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}
