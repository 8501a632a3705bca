use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::wm_features;
use super::model::WMParams;
use super::perturb::PerturbSpec;
use crate::agent::EnvAction;
use crate::error::{Error, Result};
use crate::sim::Observation;

pub const DEFAULT_LAMBDA_PUCT: f64 = 0.25;
pub const DEFAULT_LCB_SAMPLES: usize = 8;
pub const DEFAULT_LAMBDA_LCB: f64 = 0.2;
pub const LCB_TEMPERATURE_RANGE: (f64, f64) = (0.1, 1.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub p_stab: f64,
    pub seed: u64,
    pub neighbors: Vec<EnvAction>,
}

/// Mean predicted success over `j` seeded neighbors of `action`.
pub fn stability_score(
    params: &WMParams,
    obs: &Observation,
    action: &EnvAction,
    spec: PerturbSpec,
    j: usize,
    seed: u64,
) -> Result<Stability> {
    let neighbors = spec.neighbors(action, j, seed)?;
    if neighbors.is_empty() {
        return Err(Error::Config(
            "stability needs at least one neighbor".into(),
        ));
    }
    let mut sum = 0.0;
    for n in &neighbors {
        sum += params.predict(obs, n, 1.0)?.p_succ;
    }
    Ok(Stability {
        p_stab: sum / neighbors.len() as f64,
        seed,
        neighbors,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcbScore {
    pub score: f64,
    pub mean: f64,
    pub std: f64,
    pub temperatures: Vec<f64>,
}

/// `μ − λ·σ` of success probabilities predicted at the given temperatures.
pub fn lcb_at_temperatures(
    params: &WMParams,
    obs: &Observation,
    action: &EnvAction,
    temperatures: &[f64],
    lambda: f64,
) -> Result<LcbScore> {
    if temperatures.len() < 2 {
        return Err(Error::Config("LCB needs at least two temperatures".into()));
    }
    params.predict(obs, action, 1.0)?;
    let x = wm_features(obs, action);
    let ps: Vec<f64> = temperatures
        .iter()
        .map(|&t| params.predict_features(&x, t).map(|p| p.p_succ))
        .collect::<Result<_>>()?;
    let n = ps.len() as f64;
    let mean = ps.iter().sum::<f64>() / n;
    let std = (ps.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(LcbScore {
        score: mean - lambda * std,
        mean,
        std,
        temperatures: temperatures.to_vec(),
    })
}

/// LCB with `k` temperatures drawn uniformly from [0.1, 1.0].
pub fn lcb_score(
    params: &WMParams,
    obs: &Observation,
    action: &EnvAction,
    k: usize,
    lambda: f64,
    seed: u64,
) -> Result<LcbScore> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = LCB_TEMPERATURE_RANGE;
    let temps: Vec<f64> = (0..k).map(|_| rng.gen_range(lo..=hi)).collect();
    lcb_at_temperatures(params, obs, action, &temps, lambda)
}

/// Convex blend `(1 − λ)·p_succ + λ·p_stab`.
pub fn strategy1_value(p_succ: f64, p_stab: f64, lambda: f64) -> f64 {
    (1.0 - lambda) * p_succ + lambda * p_stab
}
