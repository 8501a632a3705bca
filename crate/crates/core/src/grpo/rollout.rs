use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GroupBatch, GrpoConfig, Member};
use crate::agent::{build_context, decode_action, History, Token};
use crate::error::Result;
use crate::policy::{ContextReader, PolicyParams};
use crate::seed::derive;
use crate::sim::{OutcomeCache, Task};

/// Samples `G` members from the same starting context. Each member keeps
/// attempting the task, with its own failures appended to its context,
/// until it succeeds or runs out of attempts. Undecodable generations and
/// actions the simulator rejects count as failed attempts.
pub fn collect_group(
    task: &Task,
    history: &History,
    params: &PolicyParams,
    config: &GrpoConfig,
    seed: u64,
    cache: &mut OutcomeCache,
) -> Result<GroupBatch> {
    config.validate()?;
    let start = build_context(history, &task.observation());
    let budget = config.max_attempts.saturating_sub(history.len()).max(1);
    let mut members = Vec::with_capacity(config.group_size);
    for i in 0..config.group_size {
        let member_seed = derive(seed, &[i as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(member_seed);
        let mut seq = start.clone();
        let mut old_logprobs = vec![0.0; seq.len()];
        let mut reader = ContextReader::from_tokens(&seq.tokens)?;
        let mut rewards = Vec::new();
        let mut actions = Vec::new();
        for attempt in 0..budget {
            if attempt > 0 {
                seq.push_context(Token::GEN);
                old_logprobs.push(0.0);
                reader.push(Token::GEN)?;
                seq.begin_turn();
            }
            let sampled =
                params.sample_turn(&reader, config.temperature, config.top_p, &mut rng)?;
            for (&t, &lp) in sampled.tokens.iter().zip(&sampled.logprobs) {
                seq.push_generated(t);
                old_logprobs.push(lp);
                reader.push(t)?;
            }
            let action = if sampled.truncated {
                None
            } else {
                decode_action(&sampled.tokens).ok()
            };
            let success = match &action {
                Some(a) => cache.outcome(task, a).unwrap_or(false),
                None => false,
            };
            rewards.push(if success { 1.0 } else { 0.0 });
            actions.push(action);
            if sampled.truncated {
                break;
            }
            let outcome = if success { Token::SUCCESS } else { Token::FAIL };
            seq.push_context(outcome);
            old_logprobs.push(0.0);
            reader.push(outcome)?;
            if success {
                break;
            }
        }
        members.push(Member {
            seq,
            old_logprobs,
            rewards,
            actions,
            seed: member_seed,
        });
    }
    Ok(GroupBatch {
        task_id: task.id.clone(),
        members,
    })
}
