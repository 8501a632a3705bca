use super::advantage::{group_advantages, turn_returns};
use super::{GroupBatch, GrpoConfig};
use crate::error::{Error, Result};
use crate::policy::{kl_divergence, PolicyParams, RefPolicy};

/// Value and gradient of the clipped, KL-penalized surrogate.
#[derive(Clone, Debug)]
pub struct Objective {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Mean per-token `KL(π_θ ‖ π_ref)` over generated tokens.
    pub mean_kl: f64,
    /// Fraction of generated tokens on the clipped branch.
    pub clip_fraction: f64,
    /// Importance ratio of every generated token, member-major.
    pub ratios: Vec<f64>,
    /// Advantage per member and turn.
    pub advantages: Vec<Vec<f64>>,
}

/// Turn-aware GRPO objective for one group and its exact gradient.
///
/// Each generated token in turn `k` of member `i` contributes
/// `min(r·A, clip(r, 1−ε, 1+ε)·A) − β·KL` weighted by `1 / (G · n_k)`,
/// where `n_k` is the number of loss-masked tokens in that turn. At a tie
/// between the two branches the unclipped derivative is used.
pub fn grpo_objective(
    batch: &GroupBatch,
    params: &PolicyParams,
    reference: &RefPolicy,
    config: &GrpoConfig,
) -> Result<Objective> {
    batch.validate()?;
    let g = batch.members.len() as f64;
    let returns: Vec<Vec<f64>> = batch
        .members
        .iter()
        .map(|m| turn_returns(&m.rewards, config.gamma_turn))
        .collect();
    let advantages = group_advantages(&returns);
    let (lo, hi) = (1.0 - config.clip_eps, 1.0 + config.clip_eps);

    let mut value = 0.0;
    let mut grad = vec![0.0; params.len()];
    let mut kl_sum = 0.0;
    let mut clipped = 0usize;
    let mut tokens = 0usize;
    let mut ratios = Vec::new();

    for (i, m) in batch.members.iter().enumerate() {
        let steps = params.generated_steps(&m.seq)?;
        let ref_steps = reference.params().generated_steps(&m.seq)?;
        let positions: Vec<usize> = (0..m.seq.len())
            .filter(|&p| m.seq.loss_mask[p] == 1)
            .collect();
        for (k, &(s, e)) in m.seq.turns.iter().enumerate() {
            let n_k = m.seq.loss_mask[s..e].iter().filter(|&&b| b == 1).count();
            if n_k == 0 {
                continue;
            }
            let w = 1.0 / (g * n_k as f64);
            let a = advantages[i][k];
            for (j, &pos) in positions.iter().enumerate() {
                if pos < s || pos >= e {
                    continue;
                }
                let step = &steps[j];
                let rstep = &ref_steps[j];
                let tok = m.seq.tokens[pos].index();
                let logp = step.logp[tok];
                let old = m.old_logprobs[pos];
                let r = (logp - old).exp();
                let kl = kl_divergence(&step.logp, &rstep.logp, &step.legal);
                let unclipped = r * a;
                let clipped_val = r.clamp(lo, hi) * a;
                let use_unclipped = unclipped <= clipped_val;
                let surrogate = if use_unclipped {
                    unclipped
                } else {
                    clipped_val
                };
                let term = surrogate - config.beta * kl;
                if !term.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite objective term at token {pos} of member {i}"
                    )));
                }
                value += w * term;
                kl_sum += kl;
                tokens += 1;
                ratios.push(r);
                if !use_unclipped {
                    clipped += 1;
                }

                // d/dz of the surrogate: A·r·(e_tok − p) on the unclipped branch.
                let mut dz = vec![0.0; step.logp.len()];
                for v in 0..dz.len() {
                    if !step.legal[v] {
                        continue;
                    }
                    let p = step.logp[v].exp();
                    let mut d = 0.0;
                    if use_unclipped {
                        d += a * r * (if v == tok { 1.0 } else { 0.0 } - p);
                    }
                    if config.beta != 0.0 {
                        d -= config.beta * p * (step.logp[v] - rstep.logp[v] - kl);
                    }
                    dz[v] = w * d;
                }
                params.backward(step, &dz, &mut grad);
            }
        }
    }
    if let Some(i) = grad.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient entry {i}")));
    }
    let denom = tokens.max(1) as f64;
    Ok(Objective {
        value,
        grad,
        mean_kl: kl_sum / denom,
        clip_fraction: clipped as f64 / denom,
        ratios,
        advantages,
    })
}
