/// Discounted return from each turn onwards.
pub fn turn_returns(rewards: &[f64], gamma_turn: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for k in (0..rewards.len()).rev() {
        acc = rewards[k] + gamma_turn * acc;
        out[k] = acc;
    }
    out
}

/// Standardizes returns per turn column across the group.
///
/// Rows may be ragged: a member that finished early has no entry for later
/// turns and does not take part in those columns' statistics. Columns with
/// fewer than two entries or zero spread get advantage 0.
pub fn group_advantages(returns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let turns = returns.iter().map(Vec::len).max().unwrap_or(0);
    let mut out: Vec<Vec<f64>> = returns.iter().map(|r| vec![0.0; r.len()]).collect();
    for k in 0..turns {
        let col: Vec<f64> = returns.iter().filter_map(|r| r.get(k).copied()).collect();
        if col.len() < 2 {
            continue;
        }
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 1e-12 * mean.abs().max(1.0)) {
            continue;
        }
        for (row, r) in out.iter_mut().zip(returns) {
            if let Some(&x) = r.get(k) {
                row[k] = (x - mean) / std;
            }
        }
    }
    out
}
