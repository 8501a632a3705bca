//! Input encoding of an (observation, action) pair.

use crate::agent::action::{EnvAction, GRID_SIDE, MAX_BODY_INDEX, MAX_TICK, RADIUS_LEVELS};
use crate::sim::render::feature_dim;
use crate::sim::{EnvKind, Observation, Role};

const SPAN: usize = 2 * GRID_SIDE as usize - 1;
const RADII: usize = RADIUS_LEVELS as usize;
const TICKS: usize = MAX_TICK as usize + 2;
const SLOTS: usize = MAX_BODY_INDEX as usize;

const OBS: usize = 0;
const OBS_WIDTH: usize = 304;
const CELL: usize = OBS + OBS_WIDTH;
const RADIUS: usize = CELL + 64;
const REL_GREEN: usize = RADIUS + RADII;
const REL_GREEN_COL_R: usize = REL_GREEN + SPAN * SPAN;
const REL_GREEN_ROW_R: usize = REL_GREEN_COL_R + SPAN * RADII;
const REL_TARGET: usize = REL_GREEN_ROW_R + SPAN * RADII;
const CONTINUOUS: usize = REL_TARGET + SPAN * SPAN;
const CONTINUOUS_WIDTH: usize = 4;
const EVENT_TICK: usize = CONTINUOUS + CONTINUOUS_WIDTH;
const EVENT_FIRST_TICK: usize = EVENT_TICK + SLOTS * TICKS;
const EVENT_COUNT: usize = EVENT_FIRST_TICK + TICKS;
/// Width of the world-model input vector.
pub const WM_FEATURE_DIM: usize = EVENT_COUNT + 1;

fn cell_coords(cell: u8) -> (i32, i32) {
    let c = cell as i32 - 1;
    (c % GRID_SIDE as i32, c / GRID_SIDE as i32)
}

fn rel_index(d_col: i32, d_row: i32) -> usize {
    let off = GRID_SIDE as i32 - 1;
    ((d_col + off) as usize) * SPAN + (d_row + off) as usize
}

fn first_cell(obs: &Observation, role: Role) -> Option<u8> {
    obs.annotations
        .iter()
        .find(|a| a.role == role)
        .map(|a| a.cell)
}

/// Sparse `(index, value)` encoding. Invalid pairings (action kind not
/// matching the environment) encode the observation alone.
pub fn wm_features(obs: &Observation, action: &EnvAction) -> Vec<(usize, f64)> {
    debug_assert!(feature_dim(obs.env) <= OBS_WIDTH);
    let mut x: Vec<(usize, f64)> = obs
        .features
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, &v)| (OBS + i, v))
        .collect();
    match (obs.env, action) {
        (EnvKind::GridDrop, &EnvAction::GridPlace { cell, radius }) => {
            let (col, row) = cell_coords(cell);
            let r = radius as usize - 1;
            x.push((CELL + cell as usize - 1, 1.0));
            x.push((RADIUS + r, 1.0));
            if let Some(g) = first_cell(obs, Role::GreenBall) {
                let (gc, gr) = cell_coords(g);
                let (dc, dr) = (col - gc, row - gr);
                x.push((REL_GREEN + rel_index(dc, dr), 1.0));
                x.push((
                    REL_GREEN_COL_R + (dc + GRID_SIDE as i32 - 1) as usize * RADII + r,
                    1.0,
                ));
                x.push((
                    REL_GREEN_ROW_R + (dr + GRID_SIDE as i32 - 1) as usize * RADII + r,
                    1.0,
                ));
                let side = GRID_SIDE as f64;
                x.push((CONTINUOUS, dc as f64 / side));
                x.push((CONTINUOUS + 1, dr as f64 / side));
            }
            if let Some(t) = first_cell(obs, Role::Target) {
                let (tc, tr) = cell_coords(t);
                x.push((REL_TARGET + rel_index(col - tc, row - tr), 1.0));
            }
            x.push((CONTINUOUS + 2, radius as f64 / RADII as f64));
        }
        (EnvKind::TimedRemove, EnvAction::EventSeq(events)) => {
            let removable = obs.removable_ids();
            for &id in &removable {
                let tick = events
                    .iter()
                    .find(|e| e.index == id)
                    .map_or(TICKS - 1, |e| e.tick as usize);
                x.push((EVENT_TICK + id as usize * TICKS + tick, 1.0));
            }
            let first = events.first().map_or(TICKS - 1, |e| e.tick as usize);
            x.push((EVENT_FIRST_TICK + first, 1.0));
            x.push((
                EVENT_COUNT,
                events.len() as f64 / removable.len().max(1) as f64,
            ));
        }
        _ => {}
    }
    x
}

/// Input index of the one-hot feature for a placement cell.
pub fn cell_feature_index(cell: u8) -> usize {
    CELL + cell as usize - 1
}
