use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GRID_SIDE: u8 = 8;
pub const GRID_CELLS: u8 = 64;
pub const RADIUS_LEVELS: u8 = 8;
/// Seconds per time-lattice tick.
pub const TICK_SECONDS: f64 = 0.5;
/// Largest event tick (10 s).
pub const MAX_TICK: u32 = 20;
/// Body indices addressable by event tokens are `0..MAX_BODY_INDEX`.
pub const MAX_BODY_INDEX: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimedEvent {
    pub index: u32,
    /// Half-second lattice step.
    pub tick: u32,
}

impl TimedEvent {
    pub fn seconds(&self) -> f64 {
        self.tick as f64 * TICK_SECONDS
    }
}

/// A discrete environment action.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvAction {
    /// Drop a ball in overlay cell `cell` (1..=64) with radius level `radius` (1..=8).
    GridPlace { cell: u8, radius: u8 },
    /// Remove bodies at given times; sorted by time, ties by index.
    EventSeq(Vec<TimedEvent>),
}

impl EnvAction {
    pub fn grid(cell: u8, radius: u8) -> Result<Self> {
        if !(1..=GRID_CELLS).contains(&cell) {
            return Err(Error::InvalidAction(format!("cell {cell} outside 1..=64")));
        }
        if !(1..=RADIUS_LEVELS).contains(&radius) {
            return Err(Error::InvalidAction(format!(
                "radius {radius} outside 1..=8"
            )));
        }
        Ok(EnvAction::GridPlace { cell, radius })
    }

    /// Builds a canonical event sequence from lattice ticks.
    pub fn events(mut events: Vec<TimedEvent>) -> Result<Self> {
        for e in &events {
            if e.tick > MAX_TICK {
                return Err(Error::InvalidAction(format!(
                    "time {}s beyond 10s",
                    e.seconds()
                )));
            }
            if e.index >= MAX_BODY_INDEX {
                return Err(Error::InvalidAction(format!(
                    "body index {} out of range",
                    e.index
                )));
            }
        }
        events.sort_by_key(|e| (e.tick, e.index));
        let mut seen: Vec<u32> = events.iter().map(|e| e.index).collect();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidAction(
                "a body may be removed at most once".into(),
            ));
        }
        Ok(EnvAction::EventSeq(events))
    }

    /// Builds an event sequence from `(index, seconds)` pairs.
    pub fn events_from_seconds(pairs: &[(u32, f64)]) -> Result<Self> {
        let mut events = Vec::with_capacity(pairs.len());
        for &(index, t) in pairs {
            if !(t >= 0.0) {
                return Err(Error::InvalidAction(format!("negative event time {t}")));
            }
            let ticks = t / TICK_SECONDS;
            if (ticks - ticks.round()).abs() > 1e-9 {
                return Err(Error::InvalidAction(format!(
                    "time {t}s is not on the 0.5s lattice"
                )));
            }
            events.push(TimedEvent {
                index,
                tick: ticks.round() as u32,
            });
        }
        EnvAction::events(events)
    }

    /// Zero-based (column, row) of a grid placement, row 0 at the top.
    pub fn grid_coords(&self) -> Option<(u8, u8, u8)> {
        match *self {
            EnvAction::GridPlace { cell, radius } => {
                Some(((cell - 1) % GRID_SIDE, (cell - 1) / GRID_SIDE, radius))
            }
            EnvAction::EventSeq(_) => None,
        }
    }

    pub fn from_grid_coords(col: u8, row: u8, radius: u8) -> Result<Self> {
        if col >= GRID_SIDE || row >= GRID_SIDE {
            return Err(Error::InvalidAction(format!(
                "grid coordinate ({col}, {row}) off the grid"
            )));
        }
        EnvAction::grid(row * GRID_SIDE + col + 1, radius)
    }

    /// Every grid placement, in cell-major order.
    pub fn all_grid() -> Vec<EnvAction> {
        (1..=GRID_CELLS)
            .flat_map(|c| {
                (1..=RADIUS_LEVELS).map(move |r| EnvAction::GridPlace { cell: c, radius: r })
            })
            .collect()
    }
}

impl fmt::Display for EnvAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvAction::GridPlace { cell, radius } => write!(f, "cell={cell} radius={radius}"),
            EnvAction::EventSeq(events) => {
                f.write_str("[")?;
                for (k, e) in events.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(
                        f,
                        "{{\"time\": {:.1}, \"index\": {}}}",
                        e.seconds(),
                        e.index
                    )?;
                }
                f.write_str("]")
            }
        }
    }
}
