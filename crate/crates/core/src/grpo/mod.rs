//! Turn-aware group-relative policy optimization.

pub mod advantage;
pub mod objective;
pub mod rollout;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::agent::{EnvAction, TokenSeq};
use crate::error::{Error, Result};

pub use advantage::{group_advantages, turn_returns};
pub use objective::{grpo_objective, Objective};
pub use rollout::collect_group;
pub use train::{train_step, StepMetrics};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    pub gamma_turn: f64,
    /// Intra-turn discount; only 1.0 (uniform credit within a turn) is supported.
    pub gamma_token: f64,
    pub clip_eps: f64,
    pub beta: f64,
    pub group_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub top_p: f64,
    /// Attempts per group member.
    pub max_attempts: usize,
    /// Gradient steps taken on each collected batch.
    pub ppo_epochs: usize,
    /// Tasks (groups) per training step.
    pub tasks_per_step: usize,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            gamma_turn: 0.95,
            gamma_token: 1.0,
            clip_eps: 0.2,
            beta: 0.001,
            group_size: 8,
            learning_rate: 1e-2,
            temperature: 0.7,
            top_p: 0.95,
            max_attempts: crate::agent::history::DEFAULT_K,
            ppo_epochs: 1,
            tasks_per_step: 4,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.gamma_turn > 0.0 && self.gamma_turn <= 1.0) {
            return bad("gamma_turn must lie in (0, 1]");
        }
        if self.gamma_token != 1.0 {
            return bad("gamma_token must be 1.0");
        }
        if !(self.clip_eps > 0.0) {
            return bad("clip_eps must be positive");
        }
        if !(self.beta >= 0.0) {
            return bad("beta must be non-negative");
        }
        if self.group_size < 2 {
            return bad("group_size must be at least 2");
        }
        if self.max_attempts == 0 || self.ppo_epochs == 0 || self.tasks_per_step == 0 {
            return bad("max_attempts, ppo_epochs and tasks_per_step must be positive");
        }
        if !(self.learning_rate.is_finite()
            && self.temperature > 0.0
            && self.top_p > 0.0
            && self.top_p <= 1.0)
        {
            return bad("learning_rate, temperature or top_p out of range");
        }
        Ok(())
    }
}

/// One group member: a multi-turn token sequence with its turn rewards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub seq: TokenSeq,
    /// Sampling-time log-probabilities aligned with `seq.tokens`; entries at
    /// mask-0 positions are never read.
    pub old_logprobs: Vec<f64>,
    /// One reward per turn.
    pub rewards: Vec<f64>,
    pub actions: Vec<Option<EnvAction>>,
    pub seed: u64,
}

/// `G` members sampled from one task and one starting context.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupBatch {
    pub task_id: String,
    pub members: Vec<Member>,
}

impl GroupBatch {
    pub fn validate(&self) -> Result<()> {
        if self.members.len() < 2 {
            return Err(Error::Consistency(
                "a group needs at least two members".into(),
            ));
        }
        let prefix = |m: &Member| -> usize { m.seq.turns.first().map_or(m.seq.len(), |t| t.0) };
        let first = &self.members[0];
        let p0 = &first.seq.tokens[..prefix(first)];
        for m in &self.members {
            if &m.seq.tokens[..prefix(m)] != p0 {
                return Err(Error::Consistency(
                    "group members do not share a context prefix".into(),
                ));
            }
            if m.old_logprobs.len() != m.seq.len() || m.seq.loss_mask.len() != m.seq.len() {
                return Err(Error::Consistency(
                    "per-token arrays disagree in length".into(),
                ));
            }
            if m.rewards.len() != m.seq.turns.len() {
                return Err(Error::Consistency("one reward per turn expected".into()));
            }
            m.seq.validate()?;
        }
        Ok(())
    }

    pub fn mean_reward(&self) -> f64 {
        let (sum, n) = self
            .members
            .iter()
            .flat_map(|m| &m.rewards)
            .fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Fraction of members that solved the task at some turn.
    pub fn solve_rate(&self) -> f64 {
        let solved = self
            .members
            .iter()
            .filter(|m| m.rewards.iter().any(|&r| r > 0.0))
            .count();
        solved as f64 / self.members.len() as f64
    }
}
