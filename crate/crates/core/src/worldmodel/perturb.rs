use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::action::{GRID_SIDE, MAX_TICK, RADIUS_LEVELS};
use crate::agent::{EnvAction, TimedEvent};
use crate::error::{Error, Result};
use crate::sim::EnvKind;

pub const DEFAULT_NEIGHBORS: usize = 12;

/// Lattice offsets, in ticks, for timestamp jitter.
const JITTER_TICKS: [i64; 4] = [-2, -1, 1, 2];
const ANGLE_STEP: f64 = 5.0;
const POWER_STEP: f64 = 0.1;

/// Neighbor rule around an action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbSpec {
    GridDrop,
    TimedRemove,
    AngryBirds,
}

impl PerturbSpec {
    pub fn for_env(env: EnvKind) -> Self {
        match env {
            EnvKind::GridDrop => PerturbSpec::GridDrop,
            EnvKind::TimedRemove => PerturbSpec::TimedRemove,
        }
    }

    /// Perturbation radius in lattice units.
    pub fn delta(self) -> u32 {
        match self {
            PerturbSpec::GridDrop | PerturbSpec::AngryBirds => 1,
            PerturbSpec::TimedRemove => 2,
        }
    }

    /// `j` neighbors of `action`, never the action itself.
    pub fn neighbors(self, action: &EnvAction, j: usize, seed: u64) -> Result<Vec<EnvAction>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match (self, action) {
            (PerturbSpec::GridDrop, EnvAction::GridPlace { .. }) => {
                Ok(grid_neighbors(action, j, &mut rng))
            }
            (PerturbSpec::TimedRemove, EnvAction::EventSeq(events)) => {
                jitter_neighbors(events, j, &mut rng)
            }
            _ => Err(Error::InvalidAction(format!(
                "{action} cannot be perturbed with {self:?}"
            ))),
        }
    }
}

/// All in-range ±1 moves in the four directions crossed with radius offsets {−1, 0, +1}.
pub fn grid_neighbor_set(action: &EnvAction) -> Vec<EnvAction> {
    let Some((col, row, radius)) = action.grid_coords() else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(12);
    for (dc, dr) in [(1i32, 0i32), (-1, 0), (0, 1), (0, -1)] {
        for dk in [-1i32, 0, 1] {
            let (c, r, k) = (col as i32 + dc, row as i32 + dr, radius as i32 + dk);
            if (0..GRID_SIDE as i32).contains(&c)
                && (0..GRID_SIDE as i32).contains(&r)
                && (1..=RADIUS_LEVELS as i32).contains(&k)
            {
                out.push(EnvAction::from_grid_coords(c as u8, r as u8, k as u8).expect("in range"));
            }
        }
    }
    out
}

fn grid_neighbors(action: &EnvAction, j: usize, rng: &mut ChaCha8Rng) -> Vec<EnvAction> {
    let set = grid_neighbor_set(action);
    if j <= set.len() {
        return set.choose_multiple(rng, j).cloned().collect();
    }
    let mut out = set.clone();
    let (col, row, radius) = action.grid_coords().expect("grid action");
    let dirs: Vec<(i32, i32)> = [(1, 0), (-1, 0), (0, 1), (0, -1)]
        .into_iter()
        .filter(|(dc, dr)| {
            (0..GRID_SIDE as i32).contains(&(col as i32 + dc))
                && (0..GRID_SIDE as i32).contains(&(row as i32 + dr))
        })
        .collect();
    while out.len() < j {
        let (dc, dr) = *dirs
            .choose(rng)
            .expect("every cell has an in-grid neighbor");
        let offsets: Vec<i32> = (-1..=1)
            .filter(|dk| (1..=RADIUS_LEVELS as i32).contains(&(radius as i32 + dk)))
            .collect();
        let dk = *offsets
            .choose(rng)
            .expect("radius offset 0 is always valid");
        out.push(
            EnvAction::from_grid_coords(
                (col as i32 + dc) as u8,
                (row as i32 + dr) as u8,
                (radius as i32 + dk) as u8,
            )
            .expect("in range"),
        );
    }
    out
}

fn jitter_neighbors(
    events: &[TimedEvent],
    j: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EnvAction>> {
    let original = EnvAction::EventSeq(events.to_vec());
    let mut out = Vec::with_capacity(j);
    let mut attempts = 0usize;
    while out.len() < j {
        attempts += 1;
        let jittered: Vec<TimedEvent> = events
            .iter()
            .map(|e| {
                if rng.gen_bool(0.5) {
                    let d = *JITTER_TICKS.choose(rng).expect("non-empty");
                    TimedEvent {
                        index: e.index,
                        tick: (e.tick as i64 + d).clamp(0, MAX_TICK as i64) as u32,
                    }
                } else {
                    *e
                }
            })
            .collect();
        let a = EnvAction::events(jittered)?;
        // An empty sequence, or one whose jitter is clamped away, has no distinct neighbor.
        if a != original || attempts > 64 * j.max(1) {
            out.push(a);
        }
    }
    Ok(out)
}

/// L∞ distance on the action lattice; `None` across action kinds.
/// Never-removed bodies sit one step beyond the last tick.
pub fn action_distance(a: &EnvAction, b: &EnvAction) -> Option<u32> {
    match (a, b) {
        (EnvAction::GridPlace { .. }, EnvAction::GridPlace { .. }) => {
            let (c1, r1, k1) = a.grid_coords()?;
            let (c2, r2, k2) = b.grid_coords()?;
            Some(c1.abs_diff(c2).max(r1.abs_diff(r2)).max(k1.abs_diff(k2)) as u32)
        }
        (EnvAction::EventSeq(x), EnvAction::EventSeq(y)) => {
            let tick = |s: &[TimedEvent], i: u32| {
                s.iter()
                    .find(|e| e.index == i)
                    .map_or(MAX_TICK + 1, |e| e.tick)
            };
            let ids = x.iter().chain(y).map(|e| e.index);
            Some(
                ids.map(|i| tick(x, i).abs_diff(tick(y, i)))
                    .max()
                    .unwrap_or(0),
            )
        }
        _ => None,
    }
}

/// Launch parameters of a slingshot shot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub angle_deg: f64,
    pub power: f64,
}

impl Shot {
    pub fn new(angle_deg: f64, power: f64) -> Result<Self> {
        if !(0.0..=90.0).contains(&angle_deg) || !(0.0..=1.0).contains(&power) {
            return Err(Error::InvalidAction(format!(
                "shot ({angle_deg}°, {power}) out of range"
            )));
        }
        Ok(Shot { angle_deg, power })
    }
}

/// The eight non-identity combinations of θ ± 5° and p ± 0.1, clipped to range.
pub fn shot_neighbors(shot: Shot) -> Vec<Shot> {
    let mut out = Vec::with_capacity(8);
    for da in [-ANGLE_STEP, 0.0, ANGLE_STEP] {
        for dp in [-POWER_STEP, 0.0, POWER_STEP] {
            if da == 0.0 && dp == 0.0 {
                continue;
            }
            let s = Shot {
                angle_deg: (shot.angle_deg + da).clamp(0.0, 90.0),
                power: (shot.power + dp).clamp(0.0, 1.0),
            };
            if s != shot && !out.contains(&s) {
                out.push(s);
            }
        }
    }
    out
}
