use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curation::WMRecord;
use crate::error::{Error, Result};
use crate::grpo::{train_step, GrpoConfig, StepMetrics};
use crate::policy::{snapshot, PolicyParams};
use crate::seed::{derive, label};
use crate::sim::{OutcomeCache, Task};
use crate::worldmodel::{train_wm, Example, WMParams, WmTrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyTrainConfig {
    pub hidden: usize,
    pub init_seed: u64,
    pub iterations: usize,
    pub seed: u64,
    pub grpo: GrpoConfig,
}

impl Default for PolicyTrainConfig {
    fn default() -> Self {
        PolicyTrainConfig {
            hidden: 64,
            init_seed: 1,
            iterations: 3000,
            seed: 0,
            grpo: GrpoConfig::default(),
        }
    }
}

/// GRPO from `params` against a frozen snapshot of the starting point.
/// Each iteration draws `tasks_per_step` tasks with replacement.
pub fn train_policy_from(
    mut params: PolicyParams,
    tasks: &[Task],
    config: &PolicyTrainConfig,
    cache: &mut OutcomeCache,
    mut log: Option<&mut dyn Write>,
) -> Result<(PolicyParams, Vec<StepMetrics>)> {
    if tasks.is_empty() {
        return Err(Error::Config("training needs at least one task".into()));
    }
    config.grpo.validate()?;
    let reference = snapshot(&params);
    let mut metrics = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(derive(config.seed, &[it as u64, 0]));
        let picked: Vec<&Task> = (0..config.grpo.tasks_per_step)
            .map(|_| &tasks[rng.gen_range(0..tasks.len())])
            .collect();
        let m = train_step(
            &mut params,
            &picked,
            &reference,
            &config.grpo,
            it,
            derive(config.seed, &[1]),
            cache,
        )?;
        if let Some(w) = log.as_deref_mut() {
            m.append_to(w)?;
        }
        metrics.push(m);
    }
    Ok((params, metrics))
}

pub fn train_policy(
    tasks: &[Task],
    config: &PolicyTrainConfig,
    cache: &mut OutcomeCache,
    log: Option<&mut dyn Write>,
) -> Result<(PolicyParams, Vec<StepMetrics>)> {
    train_policy_from(
        PolicyParams::init(config.hidden, config.init_seed),
        tasks,
        config,
        cache,
        log,
    )
}

/// Splits records by task: a task lands in the held-out part when its
/// seeded hash falls below `holdout`.
pub fn split_by_task(
    records: &[WMRecord],
    holdout: f64,
    seed: u64,
) -> (Vec<WMRecord>, Vec<WMRecord>) {
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for r in records {
        let u = (derive(seed, &[label(&r.task_id)]) >> 11) as f64 / (1u64 << 53) as f64;
        if u < holdout {
            test.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    (train, test)
}

pub fn examples(records: &[WMRecord]) -> Vec<Example> {
    records.iter().map(WMRecord::example).collect()
}

pub fn train_world_model(
    records: &[WMRecord],
    config: &WmTrainConfig,
) -> Result<(WMParams, Vec<f64>)> {
    if records.is_empty() {
        return Err(Error::Config("world-model training needs records".into()));
    }
    train_wm(&examples(records), config)
}
