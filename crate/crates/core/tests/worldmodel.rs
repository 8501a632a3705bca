use icprl::agent::{EnvAction, TimedEvent};
use icprl::sim::{generate_tasks, EnvKind, Observation};
use icprl::worldmodel::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn grid_obs() -> Observation {
    static OBS: OnceLock<Observation> = OnceLock::new();
    OBS.get_or_init(|| generate_tasks(EnvKind::GridDrop, 1, 0)[0].observation())
        .clone()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Parameters whose success logit is a constant `z`.
fn constant_logit(z: f64) -> WMParams {
    let mut p = WMParams::zeros(4, OutcomeLabel::ALL.len());
    let bs = p.hidden * p.feature_dim + 2 * p.hidden;
    p.values[bs] = z;
    p
}

/// Success is predicted only for placements in `cell`.
fn cell_indicator(cell: u8) -> WMParams {
    let mut p = WMParams::zeros(2, OutcomeLabel::ALL.len());
    let f = p.feature_dim;
    p.values[cell_feature_index(cell)] = 20.0;
    let ws = 2 * f + 2;
    p.values[ws] = 100.0;
    p.values[ws + 2] = -50.0;
    p
}

fn random_params(seed: u64, labels: usize) -> WMParams {
    let mut p = WMParams::zeros(5, labels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &mut p.values {
        *v = rng.gen_range(-0.3..0.3);
    }
    p
}

#[test]
fn zero_params_predict_half_and_uniform_labels() {
    let p = WMParams::zeros(8, 6);
    let pred = p
        .predict(&grid_obs(), &EnvAction::grid(10, 3).unwrap(), 1.0)
        .unwrap();
    assert_eq!(pred.p_succ, 0.5);
    assert!(pred.labels.iter().all(|&l| (l - 1.0 / 6.0).abs() < 1e-15));
}

#[test]
fn high_temperature_flattens_toward_half() {
    let p = constant_logit(3.0);
    let a = EnvAction::grid(10, 3).unwrap();
    let hot = p.predict(&grid_obs(), &a, 1e6).unwrap().p_succ;
    assert!((hot - 0.5).abs() < 1e-5);
    assert!(p.predict(&grid_obs(), &a, 0.0).is_err());
    assert!(p
        .predict(&grid_obs(), &EnvAction::EventSeq(vec![]), 1.0)
        .is_err());
}

#[test]
fn nan_params_are_a_numeric_error() {
    let mut p = constant_logit(0.0);
    let bs = p.hidden * p.feature_dim + 2 * p.hidden;
    p.values[bs] = f64::NAN;
    assert!(matches!(
        p.predict(&grid_obs(), &EnvAction::grid(1, 1).unwrap(), 1.0),
        Err(icprl::Error::Numeric(_))
    ));
}

#[test]
fn loss_at_chance_is_ln2_plus_text_term() {
    let p = WMParams::zeros(3, 4);
    let obs = grid_obs();
    let batch: Vec<Example> = (0..6)
        .map(|i| {
            Example::new(
                &obs,
                &EnvAction::grid(i + 1, 2).unwrap(),
                i % 2 == 0,
                OutcomeLabel::ALL[i as usize % 4],
            )
        })
        .collect();
    let (loss, _) = wm_loss(&p, &batch, 0.2).unwrap();
    assert!((loss - (2f64.ln() + 0.2 * 4f64.ln())).abs() < 1e-12);
}

#[test]
fn saturated_success_head_leaves_only_text_loss() {
    let obs = grid_obs();
    let mut p = WMParams::zeros(3, 6);
    let bs = p.hidden * p.feature_dim + 2 * p.hidden;
    p.values[bs] = 800.0;
    let batch = vec![Example::new(
        &obs,
        &EnvAction::grid(5, 2).unwrap(),
        true,
        OutcomeLabel::Blocked,
    )];
    let (loss, grad) = wm_loss(&p, &batch, 0.2).unwrap();
    assert!((loss - 0.2 * 6f64.ln()).abs() < 1e-12);
    assert!(grad.iter().all(|g| g.is_finite()));
    p.values[bs] = -800.0;
    let (loss, _) = wm_loss(&p, &batch, 0.2).unwrap();
    assert!(
        (loss - (800.0 + 0.2 * 6f64.ln())).abs() < 1e-9,
        "logit-space BCE stays finite"
    );
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let obs = grid_obs();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..4 {
        let p = random_params(case, 6);
        let batch: Vec<Example> = (0..5)
            .map(|_| {
                Example::new(
                    &obs,
                    &EnvAction::grid(rng.gen_range(1..=64), rng.gen_range(1..=8)).unwrap(),
                    rng.gen_bool(0.5),
                    OutcomeLabel::ALL[rng.gen_range(0..6)],
                )
            })
            .collect();
        let (_, g) = wm_loss(&p, &batch, 0.2).unwrap();
        let f = |q: &WMParams| wm_loss(q, &batch, 0.2).unwrap().0;
        let h = 1e-5;
        let mut coords: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
        coords.retain(|_| rng.gen_bool(0.05));
        coords.extend(p.hidden * p.feature_dim..g.len());
        for &i in &coords {
            let mut plus = p.clone();
            plus.values[i] += h;
            let mut minus = p.clone();
            minus.values[i] -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-7);
            assert!(err < 1e-4, "case {case} coord {i}: {} vs {fd}", g[i]);
        }
    }
}

#[test]
fn stability_of_constant_predictor_is_the_constant() {
    let p = constant_logit(0.8);
    let a = EnvAction::grid(27, 4).unwrap();
    let s = stability_score(&p, &grid_obs(), &a, PerturbSpec::GridDrop, 12, 7).unwrap();
    assert!((s.p_stab - sigmoid(0.8)).abs() < 1e-12);
    assert_eq!(s.neighbors.len(), 12);
}

#[test]
fn cell_indicator_is_unstable() {
    let obs = grid_obs();
    let p = cell_indicator(27);
    let a = EnvAction::grid(27, 4).unwrap();
    assert!(p.predict(&obs, &a, 1.0).unwrap().p_succ > 1.0 - 1e-12);
    let s = stability_score(&p, &obs, &a, PerturbSpec::GridDrop, 12, 1).unwrap();
    assert!(s.p_stab < 1e-12);
    let mut expect = grid_neighbor_set(&a);
    let mut got = s.neighbors.clone();
    expect.sort();
    got.sort();
    assert_eq!(expect, got, "an interior action has exactly 12 neighbors");
}

#[test]
fn single_neighbor_stability() {
    let p = random_params(9, 6);
    let obs = grid_obs();
    let a = EnvAction::grid(20, 5).unwrap();
    let s = stability_score(&p, &obs, &a, PerturbSpec::GridDrop, 1, 4).unwrap();
    assert_eq!(s.neighbors.len(), 1);
    assert_eq!(
        s.p_stab,
        p.predict(&obs, &s.neighbors[0], 1.0).unwrap().p_succ
    );
}

#[test]
fn corner_neighbors_are_padded_to_twelve() {
    let a = EnvAction::grid(1, 1).unwrap();
    assert_eq!(grid_neighbor_set(&a).len(), 4);
    let n = PerturbSpec::GridDrop.neighbors(&a, 12, 0).unwrap();
    assert_eq!(n.len(), 12);
    for b in &n {
        assert_ne!(b, &a);
        assert!(action_distance(&a, b).unwrap() <= 1);
    }
}

#[test]
fn lcb_examples() {
    let obs = grid_obs();
    let a = EnvAction::grid(12, 2).unwrap();
    let flat = lcb_score(&constant_logit(0.0), &obs, &a, 8, 0.2, 5).unwrap();
    assert_eq!((flat.score, flat.std), (0.5, 0.0));
    assert_eq!(flat.temperatures.len(), 8);
    assert!(flat.temperatures.iter().all(|t| (0.1..=1.0).contains(t)));

    let p = constant_logit(1.0);
    let s = lcb_at_temperatures(&p, &obs, &a, &[0.5, 1.0], 0.2).unwrap();
    let (p1, p2) = (sigmoid(2.0), sigmoid(1.0));
    let mu = (p1 + p2) / 2.0;
    let sd = (p1 - p2).abs() / 2.0;
    assert!((s.mean - mu).abs() < 1e-15);
    assert!((s.std - sd).abs() < 1e-15);
    assert!((s.score - (mu - 0.2 * sd)).abs() < 1e-15);

    let plain = lcb_score(&p, &obs, &a, 8, 0.0, 5).unwrap();
    assert_eq!(plain.score, plain.mean);
    assert!(lcb_at_temperatures(&p, &obs, &a, &[1.0], 0.2).is_err());
}

#[test]
fn strategy1_examples() {
    assert!((strategy1_value(0.8, 0.4, 0.25) - 0.7).abs() < 1e-15);
    assert_eq!(strategy1_value(0.3, 0.3, 0.25), 0.3);
    assert_eq!(strategy1_value(0.6, 0.1, 0.0), 0.6);
}

#[test]
fn shot_neighbors_cover_eight_offsets() {
    let s = Shot::new(45.0, 0.5).unwrap();
    let n = shot_neighbors(s);
    assert_eq!(n.len(), 8);
    for m in &n {
        assert!((m.angle_deg - 45.0).abs() <= 5.0 + 1e-12 && (m.power - 0.5).abs() <= 0.1 + 1e-12);
    }
    let edge = shot_neighbors(Shot::new(0.0, 1.0).unwrap());
    assert_eq!(edge.len(), 3);
    assert!(Shot::new(95.0, 0.5).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let p = random_params(4, 6);
    let q = WMParams::from_checkpoint(&p.to_checkpoint()).unwrap();
    assert!(p
        .values
        .iter()
        .zip(&q.values)
        .all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(
        WMParams::from_checkpoint(&p.to_checkpoint().replace("icprl-wm", "icprl-policy")).is_err()
    );
    let mut short = p.to_checkpoint();
    short.truncate(short.len() / 2);
    assert!(WMParams::from_checkpoint(&short).is_err());
}

#[test]
fn training_separates_a_learnable_rule() {
    let obs = grid_obs();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<Example> = (0..200)
        .map(|_| {
            let (cell, radius) = (rng.gen_range(1..=64), rng.gen_range(1..=8));
            let y = (cell - 1) % 8 < 4;
            let label = if y {
                OutcomeLabel::GreenReachesTarget
            } else {
                OutcomeLabel::NoContact
            };
            Example::new(&obs, &EnvAction::grid(cell, radius).unwrap(), y, label)
        })
        .collect();
    let config = WmTrainConfig {
        epochs: 40,
        lr: 1e-2,
        ..WmTrainConfig::default()
    };
    let (p, hist) = train_wm(&data, &config).unwrap();
    assert!(hist.last().unwrap() < &(0.5 * hist[0]));
    let report = calibration_report(&p, &data, 10).unwrap();
    assert!(report.accuracy > 0.95 && report.label_accuracy > 0.95);
    assert_eq!(report.bins.iter().map(|b| b.count).sum::<usize>(), 200);
    let (again, _) = train_wm(&data, &config).unwrap();
    assert_eq!(p, again);
}

fn arb_events() -> impl Strategy<Value = Vec<TimedEvent>> {
    proptest::sample::subsequence((0u32..6).collect::<Vec<_>>(), 0..=6).prop_flat_map(|ids| {
        let n = ids.len();
        proptest::collection::vec(0u32..=20, n).prop_map(move |ticks| {
            ids.iter()
                .zip(ticks)
                .map(|(&index, tick)| TimedEvent { index, tick })
                .collect()
        })
    })
}

proptest! {
    #[test]
    fn grid_neighbors_are_valid_and_close(cell in 1u8..=64, radius in 1u8..=8, j in 1usize..20, seed in any::<u64>()) {
        let a = EnvAction::grid(cell, radius).unwrap();
        let n = PerturbSpec::GridDrop.neighbors(&a, j, seed).unwrap();
        prop_assert_eq!(n.len(), j);
        for b in &n {
            prop_assert!(b != &a);
            let (c, r) = match *b { EnvAction::GridPlace { cell, radius } => (cell, radius), _ => unreachable!() };
            prop_assert!(EnvAction::grid(c, r).is_ok());
            prop_assert!(action_distance(&a, b).unwrap() <= PerturbSpec::GridDrop.delta());
        }
    }

    #[test]
    fn jitter_neighbors_stay_causal(events in arb_events(), seed in any::<u64>()) {
        let a = EnvAction::events(events).unwrap();
        let n = PerturbSpec::TimedRemove.neighbors(&a, 12, seed).unwrap();
        prop_assert_eq!(n.len(), 12);
        for b in &n {
            let EnvAction::EventSeq(ev) = b else { unreachable!() };
            prop_assert_eq!(&EnvAction::events(ev.clone()).unwrap(), b);
            prop_assert!(action_distance(&a, b).unwrap() <= PerturbSpec::TimedRemove.delta());
        }
    }

    #[test]
    fn lcb_is_monotone_in_lambda(z in -5.0..5.0f64, l1 in 0.0..1.0f64, l2 in 0.0..1.0f64, seed in any::<u64>()) {
        let obs = grid_obs();
        let a = EnvAction::grid(30, 3).unwrap();
        let p = constant_logit(z);
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let s_lo = lcb_score(&p, &obs, &a, 8, lo, seed).unwrap();
        let s_hi = lcb_score(&p, &obs, &a, 8, hi, seed).unwrap();
        prop_assert!(s_hi.score <= s_lo.score);
        prop_assert!(s_lo.score <= s_lo.mean);
        prop_assert!((0.0..=1.0).contains(&strategy1_value(s_lo.mean, sigmoid(z), 0.25)));
    }

    #[test]
    fn predictions_are_probabilities(seed in any::<u64>(), cell in 1u8..=64, t in 0.05..5.0f64) {
        let p = random_params(seed, 6);
        let pred = p.predict(&grid_obs(), &EnvAction::grid(cell, 4).unwrap(), t).unwrap();
        prop_assert!((0.0..=1.0).contains(&pred.p_succ));
        prop_assert!((pred.labels.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
