//! World-model dataset curation: solution discovery, diverse balanced
//! failure sampling, simulation with frames, and persistence.

pub mod labeler;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use labeler::{auto_label, Labeler};

use crate::agent::EnvAction;
use crate::error::{Error, Result};
use crate::seed;
use crate::sim::env::apply_action;
use crate::sim::run::FRAME_COUNT;
use crate::sim::{execute, FrameSet, Observation, OutcomeCache, Task};
use crate::worldmodel::{action_distance, Example, OutcomeLabel};

pub const RECORD_SCHEMA: u32 = 1;
pub const MANIFEST_SCHEMA: u32 = 1;
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationConfig {
    /// Minimum lattice distance from a new failure to every accepted action.
    pub eps_div: u32,
    pub max_iterations: usize,
    pub frames: usize,
    pub seed: u64,
    pub labeler: Labeler,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            eps_div: 1,
            max_iterations: 10_000,
            frames: FRAME_COUNT,
            seed: 0,
            labeler: Labeler::FiveFrame,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eps_div == 0 {
            return Err(Error::Config("eps_div must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if self.frames != FRAME_COUNT {
            return Err(Error::Config(format!(
                "frame count is fixed at {FRAME_COUNT}"
            )));
        }
        Ok(())
    }
}

/// One curated training example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WMRecord {
    pub schema: u32,
    pub task_id: String,
    /// Initial raster together with its annotation overlay.
    pub observation: Observation,
    pub action: EnvAction,
    pub frames: FrameSet,
    pub y: bool,
    pub outcome: OutcomeLabel,
    pub verified: bool,
}

impl WMRecord {
    pub fn example(&self) -> Example {
        Example::new(&self.observation, &self.action, self.y, self.outcome)
    }
}

/// Actions in the task's enumerable space that succeed. Invalid actions fail.
pub fn enumerate_solutions(task: &Task, cache: &mut OutcomeCache) -> Vec<EnvAction> {
    task.action_space()
        .into_iter()
        .filter(|a| matches!(cache.outcome(task, a), Ok(true)))
        .collect()
}

/// Result of diversity-filtered failure sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct FailureSample {
    pub failures: Vec<EnvAction>,
    pub draws: usize,
}

fn min_distance(a: &EnvAction, pool: &[&EnvAction]) -> u32 {
    pool.iter()
        .filter_map(|b| action_distance(a, b))
        .min()
        .unwrap_or(u32::MAX)
}

/// Rejection-samples `solutions.len()` failing actions, each at least
/// `eps_div` from every solution and earlier failure.
pub fn sample_balanced_failures(
    task: &Task,
    solutions: &[EnvAction],
    config: &CurationConfig,
    cache: &mut OutcomeCache,
) -> Result<FailureSample> {
    config.validate()?;
    let k = solutions.len();
    if k == 0 {
        return Err(Error::CurationInfeasible {
            task: task.id.clone(),
            reason: "no solutions".into(),
        });
    }
    let space = task.action_space();
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, &[seed::label(&task.id), 1]));
    let mut failures: Vec<EnvAction> = Vec::with_capacity(k);
    let mut draws = 0;
    while failures.len() < k {
        if draws >= config.max_iterations {
            return Err(Error::CurationInfeasible {
                task: task.id.clone(),
                reason: format!("found {} of {k} failures in {draws} draws", failures.len()),
            });
        }
        draws += 1;
        let a = &space[rng.gen_range(0..space.len())];
        let pool: Vec<&EnvAction> = solutions.iter().chain(&failures).collect();
        if min_distance(a, &pool) < config.eps_div {
            continue;
        }
        if matches!(cache.outcome(task, a), Ok(false)) {
            failures.push(a.clone());
        }
    }
    Ok(FailureSample { failures, draws })
}

/// Re-simulates `action`, records frames and an auto-generated outcome label.
pub fn compile_record(
    task: &Task,
    action: &EnvAction,
    y: bool,
    labeler: Labeler,
) -> Result<WMRecord> {
    let start = apply_action(&task.scene, action)?;
    let (success, run) = execute(&task.scene, action, true)?;
    if success != y {
        return Err(Error::Consistency(format!(
            "task {} action {action}: stored label {y} but simulation gives {success}",
            task.id
        )));
    }
    let frames = run.frames.expect("frames were recorded");
    let outcome = auto_label(labeler, &start, &frames, success);
    Ok(WMRecord {
        schema: RECORD_SCHEMA,
        task_id: task.id.clone(),
        observation: task.observation(),
        action: action.clone(),
        frames,
        y,
        outcome,
        verified: true,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: String,
    pub seed: u64,
    /// Size of the full solution set.
    pub solutions: usize,
    /// Solutions kept after any feasibility subsampling.
    pub positives: usize,
    pub negatives: usize,
    pub draws: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub config: CurationConfig,
    pub tasks: Vec<TaskSummary>,
    pub records: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Hex sha256 of the dataset file.
    pub content_hash: String,
}

/// Positive and negative records for one task.
pub fn curate_task(
    task: &Task,
    config: &CurationConfig,
    cache: &mut OutcomeCache,
) -> Result<(Vec<WMRecord>, TaskSummary)> {
    let all = enumerate_solutions(task, cache);
    let mut summary = TaskSummary {
        task_id: task.id.clone(),
        seed: task.seed,
        solutions: all.len(),
        positives: 0,
        negatives: 0,
        draws: 0,
        error: None,
    };
    if all.is_empty() {
        summary.error = Some("unsolvable".into());
        return Ok((Vec::new(), summary));
    }
    let failable = task
        .action_space()
        .into_iter()
        .filter(|a| matches!(cache.outcome(task, a), Ok(false)))
        .count();
    let mut solutions = all;
    if solutions.len() > failable {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed::derive(config.seed, &[seed::label(&task.id), 2]));
        let mut kept: Vec<EnvAction> = solutions
            .choose_multiple(&mut rng, failable)
            .cloned()
            .collect();
        kept.sort();
        solutions = kept;
        if solutions.is_empty() {
            summary.error = Some("no failing action exists".into());
            return Ok((Vec::new(), summary));
        }
    }
    let sample = sample_balanced_failures(task, &solutions, config, cache)?;
    let mut records = Vec::with_capacity(2 * solutions.len());
    for a in &solutions {
        records.push(compile_record(task, a, true, config.labeler)?);
    }
    for a in &sample.failures {
        records.push(compile_record(task, a, false, config.labeler)?);
    }
    summary.positives = solutions.len();
    summary.negatives = sample.failures.len();
    summary.draws = sample.draws;
    Ok((records, summary))
}

/// Curates every task in id order. Per-task errors are recorded and the task skipped.
pub fn curate(
    tasks: &[Task],
    config: &CurationConfig,
) -> Result<(Vec<WMRecord>, Vec<TaskSummary>)> {
    config.validate()?;
    let mut order: Vec<&Task> = tasks.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let mut cache = OutcomeCache::new();
    let mut records = Vec::new();
    let mut summaries = Vec::new();
    for task in order {
        match curate_task(task, config, &mut cache) {
            Ok((r, s)) => {
                records.extend(r);
                summaries.push(s);
            }
            Err(e) => summaries.push(TaskSummary {
                task_id: task.id.clone(),
                seed: task.seed,
                solutions: 0,
                positives: 0,
                negatives: 0,
                draws: 0,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok((records, summaries))
}

pub fn dataset_bytes(records: &[WMRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Curates `tasks` and writes the dataset and manifest into `dir`.
pub fn curate_dataset(tasks: &[Task], config: &CurationConfig, dir: &Path) -> Result<Manifest> {
    let (records, summaries) = curate(tasks, config)?;
    let bytes = dataset_bytes(&records)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(DATASET_FILE), &bytes)?;
    let positives = records.iter().filter(|r| r.y).count();
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        config: config.clone(),
        tasks: summaries,
        records: records.len(),
        positives,
        negatives: records.len() - positives,
        content_hash: sha256_hex(&bytes),
    };
    let mut f = fs::File::create(dir.join(MANIFEST_FILE))?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    Ok(manifest)
}

pub fn dataset_path(dir: &Path) -> PathBuf {
    dir.join(DATASET_FILE)
}

/// Reads a dataset file, checking each record's schema.
pub fn load_dataset(path: &Path) -> Result<Vec<WMRecord>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: WMRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        if r.schema != RECORD_SCHEMA {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("unsupported record schema {}", r.schema),
            });
        }
        out.push(r);
    }
    Ok(out)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let m: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    if m.schema != MANIFEST_SCHEMA {
        return Err(Error::Format(format!(
            "unsupported manifest schema {}",
            m.schema
        )));
    }
    Ok(m)
}

/// Checks the dataset file against the manifest hash.
pub fn verify_hash(dir: &Path) -> Result<bool> {
    let m = load_manifest(dir)?;
    Ok(sha256_hex(&fs::read(dir.join(DATASET_FILE))?) == m.content_hash)
}

/// Re-simulates every record and confirms its success label.
pub fn verify_labels(records: &[WMRecord], tasks: &[Task]) -> Result<()> {
    for r in records {
        let task = tasks.iter().find(|t| t.id == r.task_id).ok_or_else(|| {
            Error::Consistency(format!("record refers to unknown task {}", r.task_id))
        })?;
        let (ok, _) = execute(&task.scene, &r.action, false)?;
        if ok != r.y {
            return Err(Error::Consistency(format!(
                "task {} action {}: label {} vs {ok}",
                r.task_id, r.action, r.y
            )));
        }
    }
    Ok(())
}
