use std::io::Write;

use serde::{Deserialize, Serialize};

use super::objective::grpo_objective;
use super::rollout::collect_group;
use super::{GroupBatch, GrpoConfig};
use crate::agent::History;
use crate::error::Result;
use crate::policy::{PolicyParams, RefPolicy};
use crate::seed::derive;
use crate::sim::{OutcomeCache, Task};

/// One line of the training metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub iteration: usize,
    /// Objective before the update, averaged over groups.
    pub j: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    /// Mean per-attempt reward.
    pub mean_reward: f64,
    /// Fraction of group members that solved their task.
    pub solve_rate: f64,
}

impl StepMetrics {
    pub fn append_to<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

/// Gradient ascent on the batch-mean objective, `ppo_epochs` times over
/// the same rollouts. Returns the objective evaluated before the first update.
pub fn optimize(
    params: &mut PolicyParams,
    batches: &[GroupBatch],
    reference: &RefPolicy,
    config: &GrpoConfig,
) -> Result<(f64, f64, f64)> {
    let n = batches.len().max(1) as f64;
    let mut first = None;
    for _ in 0..config.ppo_epochs {
        let mut grad = vec![0.0; params.len()];
        let (mut j, mut kl, mut clip) = (0.0, 0.0, 0.0);
        for b in batches {
            let o = grpo_objective(b, params, reference, config)?;
            j += o.value / n;
            kl += o.mean_kl / n;
            clip += o.clip_fraction / n;
            for (g, x) in grad.iter_mut().zip(&o.grad) {
                *g += x / n;
            }
        }
        first.get_or_insert((j, kl, clip));
        for (p, g) in params.values.iter_mut().zip(&grad) {
            *p += config.learning_rate * g;
        }
    }
    params.check_finite()?;
    Ok(first.unwrap_or((0.0, 0.0, 0.0)))
}

/// Collects one group per task, then updates `params`.
pub fn train_step(
    params: &mut PolicyParams,
    tasks: &[&Task],
    reference: &RefPolicy,
    config: &GrpoConfig,
    iteration: usize,
    seed: u64,
    cache: &mut OutcomeCache,
) -> Result<StepMetrics> {
    let mut batches = Vec::with_capacity(tasks.len());
    for (t, task) in tasks.iter().enumerate() {
        let s = derive(seed, &[iteration as u64, t as u64]);
        batches.push(collect_group(
            task,
            &History::new(task.id.clone()),
            params,
            config,
            s,
            cache,
        )?);
    }
    let (j, kl, clip_fraction) = optimize(params, &batches, reference, config)?;
    let n = batches.len().max(1) as f64;
    Ok(StepMetrics {
        iteration,
        j,
        kl,
        clip_fraction,
        mean_reward: batches.iter().map(GroupBatch::mean_reward).sum::<f64>() / n,
        solve_rate: batches.iter().map(GroupBatch::solve_rate).sum::<f64>() / n,
    })
}
