//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use icprl::agent::{EnvAction, History};
use icprl::curation::{curate, dataset_bytes, verify_labels, CurationConfig, Labeler, WMRecord};
use icprl::grpo::{collect_group, group_advantages, grpo_objective, GroupBatch, GrpoConfig};
use icprl::harness::train::{
    examples, split_by_task, train_policy, train_world_model, PolicyTrainConfig,
};
use icprl::harness::{compare, evaluate_tasks, Agent, ResultsTable};
use icprl::planner::{puct_select, search, PlannerConfig, Score, Scorer, SearchState, StopReason};
use icprl::policy::{snapshot, PolicyParams};
use icprl::sim::physics::{step, DT};
use icprl::sim::{
    apply_action, execute, generate_tasks, Body, Bounds, EnvKind, Observation, OutcomeCache, Role,
    Scene, Task, Vec2,
};
use icprl::worldmodel::{
    action_distance, calibration_report, wm_loss, Example, OutcomeLabel, WMParams, WmTrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

struct Suite {
    failed: usize,
}

impl Suite {
    fn run(&mut self, id: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(l)) if elapsed > l => Err(format!("took {elapsed:.1?}, limit {l:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("[PASS] {id:>2} {name}: {detail} ({elapsed:.1?})"),
            Err(detail) => {
                self.failed += 1;
                println!("[FAIL] {id:>2} {name}: {detail} ({elapsed:.1?})");
            }
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

// ---------------------------------------------------------------- 1

fn advantage_standardization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut degenerate = 0;
    for case in 0..1000 {
        let g = rng.gen_range(2..9);
        let k = rng.gen_range(1..6);
        let mut m: Vec<Vec<f64>> = (0..g)
            .map(|_| (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let flat = rng.gen_range(0..k);
        if rng.gen_bool(0.3) {
            let v = rng.gen_range(-1.0..1.0);
            for row in &mut m {
                row[flat] = v;
            }
        }
        let a = group_advantages(&m);
        for col in 0..k {
            let ret: Vec<f64> = m.iter().map(|r| r[col]).collect();
            let adv: Vec<f64> = a.iter().map(|r| r[col]).collect();
            if ret.iter().all(|&x| x == ret[0]) {
                degenerate += 1;
                ensure!(
                    adv.iter().all(|&x| x == 0.0),
                    "case {case} column {col}: degenerate column not zeroed"
                );
                continue;
            }
            let mean = adv.iter().sum::<f64>() / g as f64;
            let std = (adv.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / g as f64).sqrt();
            ensure!(mean.abs() < 1e-9, "case {case} column {col}: mean {mean:e}");
            ensure!(
                (std - 1.0).abs() < 1e-9,
                "case {case} column {col}: std {std}"
            );
        }
    }
    Ok(format!(
        "1000 matrices, {degenerate} degenerate columns zeroed"
    ))
}

// ---------------------------------------------------------------- 2-4

fn small_config() -> GrpoConfig {
    GrpoConfig {
        group_size: 4,
        max_attempts: 3,
        beta: 0.05,
        ..GrpoConfig::default()
    }
}

fn jitter(p: &PolicyParams, scale: f64, seed: u64) -> PolicyParams {
    let mut q = p.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &mut q.values {
        *v += rng.gen_range(-scale..scale);
    }
    q
}

/// Rollouts from `sampler` on golden tasks with random per-turn rewards.
fn batches(
    tasks: &[Task],
    sampler: &PolicyParams,
    config: &GrpoConfig,
    n: usize,
) -> Vec<GroupBatch> {
    let mut cache = OutcomeCache::new();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    (0..n)
        .map(|i| {
            let mut b = collect_group(
                &tasks[i % tasks.len()],
                &History::new(tasks[i % tasks.len()].id.clone()),
                sampler,
                config,
                i as u64,
                &mut cache,
            )
            .expect("rollout");
            for m in &mut b.members {
                for r in &mut m.rewards {
                    *r = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
                }
            }
            b
        })
        .collect()
}

fn grpo_gradient(tasks: &[Task]) -> Outcome {
    let config = small_config();
    let sampler = PolicyParams::init(8, 3);
    let params = jitter(&sampler, 0.4, 5);
    let reference = snapshot(&jitter(&sampler, 0.2, 6));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut clipped_batches = 0;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let bs = batches(tasks, &sampler, &config, 6);
    for (bi, b) in bs.iter().enumerate() {
        let o = grpo_objective(b, &params, &reference, &config).map_err(|e| e.to_string())?;
        if o.clip_fraction > 0.0 {
            clipped_batches += 1;
        }
        let f = |q: &PolicyParams| grpo_objective(b, q, &reference, &config).unwrap().value;
        let mut coords: Vec<usize> = (0..o.grad.len()).filter(|&i| o.grad[i] != 0.0).collect();
        coords.retain(|_| rng.gen_bool(0.02));
        coords.extend((0..20).map(|_| rng.gen_range(0..o.grad.len())));
        let h = 1e-5;
        for &i in &coords {
            let mut plus = params.clone();
            plus.values[i] += h;
            let mut minus = params.clone();
            minus.values[i] -= h;
            let fd = (f(&plus) - f(&minus)) / (2.0 * h);
            let e = rel_err(fd, o.grad[i]);
            worst = worst.max(e);
            ensure!(
                e < 1e-4,
                "batch {bi} coord {i}: analytic {} vs fd {fd}",
                o.grad[i]
            );
            checked += 1;
        }
    }
    ensure!(clipped_batches > 0, "no batch exercised the clipped branch");
    Ok(format!(
        "{} batches, {checked} coordinates, worst rel. err {worst:.1e}, {clipped_batches} batches with clipping, beta {}",
        bs.len(),
        config.beta
    ))
}

fn masking(tasks: &[Task]) -> Outcome {
    let config = small_config();
    let sampler = PolicyParams::init(8, 4);
    let params = jitter(&sampler, 0.3, 8);
    let reference = snapshot(&jitter(&sampler, 0.2, 9));
    let mut junk_tokens = 0;
    for (bi, b) in batches(tasks, &sampler, &config, 5).iter().enumerate() {
        let base = grpo_objective(b, &params, &reference, &config).map_err(|e| e.to_string())?;
        for junk in [f64::NAN, 1e6, -3.0] {
            let mut c = b.clone();
            for m in &mut c.members {
                for (lp, &mask) in m.old_logprobs.iter_mut().zip(&m.seq.loss_mask) {
                    if mask == 0 {
                        *lp = junk;
                        junk_tokens += 1;
                    }
                }
            }
            let o = grpo_objective(&c, &params, &reference, &config).map_err(|e| e.to_string())?;
            ensure!(
                o.value.to_bits() == base.value.to_bits(),
                "batch {bi}: J changed with junk {junk}"
            );
            ensure!(
                o.grad
                    .iter()
                    .zip(&base.grad)
                    .all(|(a, b)| a.to_bits() == b.to_bits()),
                "batch {bi}: gradient changed with junk {junk}"
            );
        }
    }
    Ok(format!(
        "{junk_tokens} mask-0 entries perturbed; J and gradient bit-identical"
    ))
}

fn on_policy(tasks: &[Task]) -> Outcome {
    let config = small_config();
    let params = PolicyParams::init(16, 11);
    let reference = snapshot(&params);
    let mut ratios = 0;
    let mut worst: f64 = 0.0;
    for b in batches(tasks, &params, &config, 5) {
        let o = grpo_objective(&b, &params, &reference, &config).map_err(|e| e.to_string())?;
        for r in &o.ratios {
            worst = worst.max((r - 1.0).abs());
        }
        ratios += o.ratios.len();
        ensure!(
            o.mean_kl == 0.0,
            "KL {} with identical reference",
            o.mean_kl
        );
    }
    ensure!(worst <= 1e-9, "ratio deviates by {worst:e}");
    Ok(format!("{ratios} ratios, max |r-1| = {worst:.1e}, KL = 0"))
}

// ---------------------------------------------------------------- 5

struct TableScorer(Vec<f64>, Vec<EnvAction>);

impl Scorer for TableScorer {
    fn score(&self, _: &Observation, action: &EnvAction, _: u64) -> icprl::Result<Score> {
        let i = self
            .1
            .iter()
            .position(|a| a == action)
            .expect("known candidate");
        Ok(Score {
            v: self.0[i],
            mu: self.0[i],
        })
    }
}

/// Straight-line root-node loop used as the reference.
fn reference_plan(
    v: &[f64],
    prior: &[f64],
    c: f64,
    budget: usize,
) -> (Vec<(usize, Option<f64>)>, StopReason, usize) {
    let n = v.len();
    let mut q = vec![0.0; n];
    let mut visits = vec![0u32; n];
    let mut last = usize::MAX;
    let mut n_same = 0;
    let mut trace = Vec::new();
    let mut stop = StopReason::Budget;
    for _t in 0..budget {
        let n_tot: u32 = visits.iter().sum();
        let mut a = 0;
        let mut best = f64::NEG_INFINITY;
        for b in 0..n {
            let u = q[b] + c * prior[b] * (n_tot as f64).sqrt() / (1.0 + visits[b] as f64);
            if u > best {
                best = u;
                a = b;
            }
        }
        if a == last {
            n_same += 1;
        } else {
            n_same = 1;
        }
        last = a;
        if n_same >= 3 {
            trace.push((a, None));
            stop = StopReason::Repeat;
            break;
        }
        q[a] = (q[a] * visits[a] as f64 + v[a]) / (visits[a] as f64 + 1.0);
        visits[a] += 1;
        trace.push((a, Some(v[a])));
        if v[a] > 0.8 {
            stop = StopReason::Confident;
            break;
        }
    }
    let mut best = 0;
    for b in 1..n {
        if q[b] > q[best] {
            best = b;
        }
    }
    (trace, stop, best)
}

fn puct_equivalence(obs: &Observation) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for trial in 0..1000 {
        let n = rng.gen_range(1..8);
        let actions: Vec<EnvAction> = (0..n)
            .map(|i| EnvAction::grid(i as u8 + 1, 1).unwrap())
            .collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
        let z: f64 = raw.iter().sum();
        let mut s = SearchState::with_prior(actions, raw.iter().map(|p| p / z).collect());
        for i in 0..n {
            s.q[i] = rng.gen_range(0.0..1.0);
            s.visits[i] = rng.gen_range(0..10);
        }
        let c = rng.gen_range(0.0..4.0);
        let n_tot: u32 = s.visits.iter().sum();
        let crit: Vec<f64> = (0..n)
            .map(|i| s.q[i] + c * s.prior[i] * (n_tot as f64).sqrt() / (1.0 + s.visits[i] as f64))
            .collect();
        let max = crit.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let expect = crit.iter().position(|&x| x == max).unwrap();
        ensure!(
            puct_select(&s, c) == expect,
            "trial {trial}: select {} vs oracle {expect}",
            puct_select(&s, c)
        );
    }
    let (mut repeat, mut confident, mut budget) = (0, 0, 0);
    for trial in 0..500 {
        let n = rng.gen_range(1..6);
        let actions: Vec<EnvAction> = (0..n)
            .map(|i| EnvAction::grid(i as u8 + 10, 2).unwrap())
            .collect();
        let v: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.15) {
                    rng.gen_range(0.8..1.0)
                } else {
                    rng.gen_range(0.0..0.8)
                }
            })
            .collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let z: f64 = raw.iter().sum();
        let prior: Vec<f64> = raw.iter().map(|p| p / z).collect();
        let c = rng.gen_range(0.0..3.0);
        let b = rng.gen_range(1..40);
        let config = PlannerConfig {
            c_puct: c,
            budget: b,
            ..PlannerConfig::default()
        };
        let state = SearchState::with_prior(actions.clone(), prior.clone());
        let r = search(
            state,
            obs,
            &TableScorer(v.clone(), actions.clone()),
            &config,
            trial,
        )
        .map_err(|e| e.to_string())?;
        let (steps, stop, best) = reference_plan(&v, &prior, c, b);
        let got: Vec<(usize, Option<f64>)> = r
            .trace
            .iter()
            .map(|t| (actions.iter().position(|a| a == &t.action).unwrap(), t.v))
            .collect();
        ensure!(
            got == steps,
            "trial {trial}: trace {got:?} vs reference {steps:?}"
        );
        ensure!(
            r.stop == stop,
            "trial {trial}: stop {:?} vs {stop:?}",
            r.stop
        );
        ensure!(
            r.action == actions[best],
            "trial {trial}: chose {} vs {}",
            r.action,
            actions[best]
        );
        match stop {
            StopReason::Repeat => repeat += 1,
            StopReason::Confident => confident += 1,
            StopReason::Budget => budget += 1,
        }
    }
    ensure!(repeat > 0 && confident > 0, "stop rules not both exercised");
    Ok(format!(
        "1000 selections match brute force; 500 traces match the reference (stops: {repeat} repeat, {confident} confident, {budget} budget)"
    ))
}

// ---------------------------------------------------------------- 6

fn curation(tasks: &[Task]) -> Result<(String, Vec<WMRecord>), String> {
    let config = CurationConfig {
        seed: 0,
        ..CurationConfig::default()
    };
    let (records, summaries) = curate(tasks, &config).map_err(|e| e.to_string())?;
    ensure!(
        summaries.iter().all(|s| s.error.is_none()),
        "task errors: {:?}",
        summaries
            .iter()
            .filter_map(|s| s.error.clone())
            .collect::<Vec<_>>()
    );
    for s in &summaries {
        ensure!(
            s.positives == s.negatives && s.positives > 0,
            "task {}: {} vs {}",
            s.task_id,
            s.positives,
            s.negatives
        );
        let rs: Vec<&WMRecord> = records.iter().filter(|r| r.task_id == s.task_id).collect();
        let pos: Vec<&EnvAction> = rs.iter().filter(|r| r.y).map(|r| &r.action).collect();
        let neg: Vec<&EnvAction> = rs.iter().filter(|r| !r.y).map(|r| &r.action).collect();
        ensure!(
            pos.len() == neg.len(),
            "task {}: record imbalance",
            s.task_id
        );
        for (i, f) in neg.iter().enumerate() {
            for other in pos.iter().chain(&neg[..i]) {
                let d = action_distance(f, other).unwrap();
                ensure!(
                    d >= config.eps_div,
                    "task {}: failure {f} within {d} of {other}",
                    s.task_id
                );
            }
        }
    }
    verify_labels(&records, tasks).map_err(|e| e.to_string())?;
    let bytes = dataset_bytes(&records).map_err(|e| e.to_string())?;
    let (again, _) = curate(tasks, &config).map_err(|e| e.to_string())?;
    ensure!(
        dataset_bytes(&again).map_err(|e| e.to_string())? == bytes,
        "re-curation is not byte-identical"
    );
    let pos = records.iter().filter(|r| r.y).count();
    Ok((
        format!("{} tasks, {} records ({pos} positive), diversity and labels verified, byte-identical rerun", tasks.len(), records.len()),
        records,
    ))
}

// ---------------------------------------------------------------- 7

fn world_model(records: &[WMRecord]) -> Outcome {
    let (train, test) = split_by_task(records, 0.3, 1);
    ensure!(!test.is_empty() && !train.is_empty(), "degenerate split");
    let (params, _) =
        train_world_model(&train, &WmTrainConfig::default()).map_err(|e| e.to_string())?;
    let report = calibration_report(&params, &examples(&test), 10).map_err(|e| e.to_string())?;
    ensure!(
        report.accuracy >= 0.8,
        "held-out accuracy {:.3}",
        report.accuracy
    );
    ensure!(
        report.bce < 2f64.ln(),
        "held-out BCE {:.3} not below ln 2",
        report.bce
    );

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut p = WMParams::init(6, OutcomeLabel::ALL.len(), 2);
    for v in &mut p.values {
        *v += rng.gen_range(-0.2..0.2);
    }
    let batch: Vec<Example> = examples(&train).into_iter().take(12).collect();
    let (_, g) = wm_loss(&p, &batch, 0.2).map_err(|e| e.to_string())?;
    let mut coords: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
    coords.retain(|_| rng.gen_bool(0.1));
    let mut worst: f64 = 0.0;
    for &i in &coords {
        let mut plus = p.clone();
        plus.values[i] += 1e-5;
        let mut minus = p.clone();
        minus.values[i] -= 1e-5;
        let fd = (wm_loss(&plus, &batch, 0.2).unwrap().0 - wm_loss(&minus, &batch, 0.2).unwrap().0)
            / 2e-5;
        let e = rel_err(fd, g[i]);
        worst = worst.max(e);
        ensure!(e < 1e-4, "wm gradient coord {i}: {} vs {fd}", g[i]);
    }
    Ok(format!(
        "held-out ({} records) accuracy {:.3}, BCE {:.3} < ln 2 = {:.3}; {} gradient coords, worst rel. err {worst:.1e}",
        test.len(),
        report.accuracy,
        report.bce,
        2f64.ln(),
        coords.len()
    ))
}

// ---------------------------------------------------------------- 8

fn physics(tasks: &[Task]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut runs = 0;
    let mut steps = 0;
    let mut worst: f64 = 0.0;
    for task in tasks {
        for _ in 0..5 {
            let a = EnvAction::grid(rng.gen_range(1..=64), rng.gen_range(1..=8)).unwrap();
            let Ok(start) = apply_action(&task.scene, &a) else {
                continue;
            };
            let (ok1, r1) = execute(&task.scene, &a, false).map_err(|e| e.to_string())?;
            let (ok2, r2) = execute(&task.scene, &a, false).map_err(|e| e.to_string())?;
            ensure!(
                ok1 == ok2 && format!("{:?}", r1.terminal) == format!("{:?}", r2.terminal),
                "task {} action {a}: reruns differ",
                task.id
            );
            let mut cur = start;
            for _ in 0..400 {
                let next = step(&cur, DT).map_err(|e| e.to_string())?;
                let (e0, e1) = (cur.energy(), next.energy());
                let rise = (e1 - e0) / e0.abs().max(1e-12);
                worst = worst.max(rise);
                ensure!(
                    rise <= 1e-6,
                    "task {} action {a}: energy rose by {rise:e}",
                    task.id
                );
                cur = next;
                steps += 1;
            }
            runs += 1;
        }
    }
    let mut s = Scene::new(
        EnvKind::GridDrop,
        Bounds::new(Vec2::ZERO, Vec2::new(8.0, 8.0)),
    );
    s.gravity = Vec2::ZERO;
    s.restitution = 1.0;
    s.bodies.push(
        Body::circle(0, Role::GreenBall, Vec2::new(3.0, 4.0), 0.25)
            .with_velocity(Vec2::new(1.0, 0.0)),
    );
    s.bodies.push(
        Body::circle(1, Role::Agent, Vec2::new(5.0, 4.0), 0.25).with_velocity(Vec2::new(-1.0, 0.0)),
    );
    for _ in 0..150 {
        s = step(&s, DT).map_err(|e| e.to_string())?;
    }
    ensure!(
        s.bodies[0].velocity == Vec2::new(-1.0, 0.0) && s.bodies[1].velocity == Vec2::new(1.0, 0.0),
        "elastic exchange gave {:?} / {:?}",
        s.bodies[0].velocity,
        s.bodies[1].velocity
    );
    Ok(format!("{runs} rollouts bit-identical; {steps} steps, max relative energy rise {worst:.1e}; elastic exchange exact"))
}

// ---------------------------------------------------------------- 9-11

const RUNS: usize = 3;
const K: usize = 10;
const EVAL_SEED: u64 = 7;

fn sr(t: &ResultsTable) -> String {
    t.mean_success_rate
        .iter()
        .map(|v| format!("{:.3}", v))
        .collect::<Vec<_>>()
        .join("/")
}

fn monotone(t: &ResultsTable) -> bool {
    t.mean_success_rate.windows(2).all(|w| w[0] <= w[1])
}

fn learning(golden: &[Task], policy: &PolicyParams, cache: &mut OutcomeCache) -> Outcome {
    let mock = evaluate_tasks(golden, &Agent::Mock, K, RUNS, EVAL_SEED, cache)
        .map_err(|e| e.to_string())?
        .0;
    let closed: f64 = golden
        .iter()
        .map(|t| {
            let wins = t
                .action_space()
                .iter()
                .filter(|a| matches!(cache.outcome(t, a), Ok(true)))
                .count();
            1.0 - (1.0 - wins as f64 / 512.0).powi(K as i32)
        })
        .sum::<f64>()
        / golden.len() as f64;
    let agent = Agent::Policy {
        params: policy,
        temperature: 0.7,
        top_p: 0.95,
    };
    let trained = evaluate_tasks(golden, &agent, K, RUNS, EVAL_SEED, cache)
        .map_err(|e| e.to_string())?
        .0;
    let baseline = mock.final_success_rate().max(closed);
    let t10 = trained.final_success_rate();
    let gap = t10 - trained.mean_success_rate[0];
    ensure!(
        t10 >= 3.0 * baseline,
        "trained S.R.@10 {t10:.3} < 3 x mock {baseline:.3}"
    );
    ensure!(
        monotone(&trained),
        "trained S.R. not monotone: {}",
        sr(&trained)
    );
    ensure!(gap > 0.0, "no in-context gap: {}", sr(&trained));
    Ok(format!(
        "S.R.@1/4/7/10 trained {} vs mock {} (closed form @10 {closed:.3}); ratio {:.1}x, gap {gap:.3}",
        sr(&trained),
        sr(&mock),
        t10 / baseline
    ))
}

fn planner_uplift(
    held: &[Task],
    policy: &PolicyParams,
    wm: &WMParams,
    cache: &mut OutcomeCache,
) -> Result<(String, ResultsTable), String> {
    let planner = PlannerConfig::default();
    let only = evaluate_tasks(
        held,
        &Agent::Policy {
            params: policy,
            temperature: 0.7,
            top_p: 0.95,
        },
        K,
        RUNS,
        EVAL_SEED,
        cache,
    )
    .map_err(|e| e.to_string())?
    .0;
    let full = evaluate_tasks(
        held,
        &Agent::Full {
            policy,
            wm,
            planner: &planner,
        },
        K,
        RUNS,
        EVAL_SEED,
        cache,
    )
    .map_err(|e| e.to_string())?
    .0;
    ensure!(
        full.final_success_rate() >= only.final_success_rate(),
        "full {} < policy-only {}",
        sr(&full),
        sr(&only)
    );
    Ok((
        format!(
            "held-out S.R.@1/4/7/10 full {} vs policy-only {}",
            sr(&full),
            sr(&only)
        ),
        full,
    ))
}

fn ablation(
    golden: &[Task],
    held: &[Task],
    policy: &PolicyParams,
    five: &[WMRecord],
    five_table: &ResultsTable,
    cache: &mut OutcomeCache,
) -> Outcome {
    let config = CurationConfig {
        labeler: Labeler::TerminalOnly,
        ..CurationConfig::default()
    };
    let (terminal, _) = curate(golden, &config).map_err(|e| e.to_string())?;
    ensure!(terminal.len() == five.len(), "variants differ in size");
    ensure!(
        terminal
            .iter()
            .zip(five)
            .all(|(a, b)| a.action == b.action && a.y == b.y),
        "variants differ in sampled actions"
    );
    let differing = terminal
        .iter()
        .zip(five)
        .filter(|(a, b)| a.outcome != b.outcome)
        .count();
    let (wm, _) =
        train_world_model(&terminal, &WmTrainConfig::default()).map_err(|e| e.to_string())?;
    let planner = PlannerConfig::default();
    let table = evaluate_tasks(
        held,
        &Agent::Full {
            policy,
            wm: &wm,
            planner: &planner,
        },
        K,
        RUNS,
        EVAL_SEED,
        cache,
    )
    .map_err(|e| e.to_string())?
    .0;
    ensure!(
        table
            .runs
            .iter()
            .map(|r| r.seed)
            .eq(five_table.runs.iter().map(|r| r.seed)),
        "seeds differ between variants"
    );
    println!(
        "{}",
        compare("five-frame", five_table, "terminal-only", &table).trim_end()
    );
    Ok(format!(
        "both labelers curated ({differing} of {} outcome labels differ); comparison emitted",
        five.len()
    ))
}

fn main() {
    let total = Instant::now();
    let mut suite = Suite { failed: 0 };
    let golden = generate_tasks(EnvKind::GridDrop, 20, 0);
    let held = generate_tasks(EnvKind::GridDrop, 20, 1);
    let obs = golden[0].observation();

    suite.run(
        1,
        "advantage standardization",
        Some(Duration::from_secs(5)),
        advantage_standardization,
    );
    suite.run(
        2,
        "GRPO gradient vs finite differences",
        Some(Duration::from_secs(120)),
        || grpo_gradient(&golden),
    );
    suite.run(3, "loss masking", None, || masking(&golden));
    suite.run(4, "on-policy identity", None, || on_policy(&golden));
    suite.run(5, "PUCT oracle equivalence", None, || {
        puct_equivalence(&obs)
    });

    let mut records = Vec::new();
    suite.run(6, "curation", Some(Duration::from_secs(300)), || {
        let (msg, r) = curation(&golden)?;
        records = r;
        Ok(msg)
    });
    suite.run(7, "world-model calibration", None, || world_model(&records));
    suite.run(8, "physics", None, || physics(&golden[..10]));

    let mut cache = OutcomeCache::new();
    let start9 = Instant::now();
    let policy = train_policy(&golden, &PolicyTrainConfig::default(), &mut cache, None)
        .expect("policy training");
    let policy = policy.0;
    let train_time = start9.elapsed();
    suite.run(
        9,
        "end-to-end learning",
        Some(Duration::from_secs(1800).saturating_sub(train_time)),
        || {
            learning(&golden, &policy, &mut cache)
                .map(|m| format!("{m}; training {train_time:.1?}"))
        },
    );

    let wm = if records.is_empty() {
        None
    } else {
        train_world_model(&records, &WmTrainConfig::default())
            .ok()
            .map(|r| r.0)
    };
    let mut full_table = None;
    suite.run(10, "planner uplift", None, || {
        let wm = wm.as_ref().ok_or("no world model")?;
        let (msg, t) = planner_uplift(&held, &policy, wm, &mut cache)?;
        full_table = Some(t);
        Ok(msg)
    });
    suite.run(11, "labeler ablation harness", None, || {
        let t = full_table
            .as_ref()
            .ok_or("planner evaluation unavailable")?;
        ablation(&golden, &held, &policy, &records, t, &mut cache)
    });

    println!(
        "acceptance: {} of 11 criteria passed in {:.1?}",
        11 - suite.failed,
        total.elapsed()
    );
    if suite.failed > 0 {
        std::process::exit(1);
    }
}
