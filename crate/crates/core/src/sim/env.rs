use super::geom::Vec2;
use super::physics::DEFAULT_MAX_STEPS;
use super::render::GRID;
use super::run::{run, SimRun};
use super::scene::{Body, EnvKind, Role, Scene, Shape};
use crate::agent::action::{EnvAction, GRID_SIDE, RADIUS_LEVELS};
use crate::error::{Error, Result};

/// World-space center and radius of a grid placement.
pub fn placement(scene: &Scene, cell: u8, radius: u8) -> (Vec2, f64) {
    let b = &scene.bounds;
    let cw = b.width() / GRID as f64;
    let ch = b.height() / GRID as f64;
    let col = ((cell - 1) % GRID_SIDE) as f64;
    let row = ((cell - 1) / GRID_SIDE) as f64;
    let center = Vec2::new(b.min.x + (col + 0.5) * cw, b.max.y - (row + 0.5) * ch);
    (center, radius as f64 / (2.0 * RADIUS_LEVELS as f64) * cw)
}

fn overlaps(scene: &Scene, center: Vec2, r: f64) -> Option<u32> {
    scene.active_bodies().find_map(|b| {
        let gap = match b.shape {
            Shape::Circle { radius } => (center - b.position).length() - radius - r,
            Shape::Segment { a, b: e } => {
                (center - super::geom::closest_on_segment(center, a, e)).length() - r
            }
        };
        (gap < 0.0).then_some(b.id)
    })
}

/// Applies an agent action to the initial scene of a task.
pub fn apply_action(scene: &Scene, action: &EnvAction) -> Result<Scene> {
    let mut s = scene.clone();
    match (scene.env, action) {
        (EnvKind::GridDrop, &EnvAction::GridPlace { cell, radius }) => {
            EnvAction::grid(cell, radius)?;
            let (center, r) = placement(scene, cell, radius);
            if let Some(id) = overlaps(scene, center, r) {
                return Err(Error::InvalidAction(format!(
                    "placement cell={cell} radius={radius} overlaps body {id}"
                )));
            }
            s.bodies
                .push(Body::circle(scene.next_id(), Role::Agent, center, r));
        }
        (EnvKind::TimedRemove, EnvAction::EventSeq(events)) => {
            EnvAction::events(events.clone())?;
            for e in events {
                let t = scene.time + e.seconds();
                let body = s.body_mut(e.index).ok_or_else(|| {
                    Error::InvalidAction(format!("unknown body index {}", e.index))
                })?;
                if !body.removable {
                    return Err(Error::InvalidAction(format!(
                        "body {} is not removable",
                        e.index
                    )));
                }
                body.remove_at = Some(t);
            }
        }
        (env, a) => {
            return Err(Error::InvalidAction(format!(
                "action {a} does not apply to {env}"
            )));
        }
    }
    Ok(s)
}

/// Success predicate on a terminal scene.
pub fn check_success(terminal: &Scene) -> bool {
    match terminal.env {
        EnvKind::GridDrop => terminal.target_touched,
        EnvKind::TimedRemove => {
            let abyss = terminal.abyss_y.unwrap_or(f64::NEG_INFINITY);
            terminal
                .bodies
                .iter()
                .filter(|b| b.role == Role::RedBall)
                .all(|b| b.active && b.position.y < abyss)
        }
    }
}

/// Applies `action`, runs to rest, and reports success. Invalid actions are errors.
pub fn execute(scene: &Scene, action: &EnvAction, record_frames: bool) -> Result<(bool, SimRun)> {
    let start = apply_action(scene, action)?;
    let r = run(&start, DEFAULT_MAX_STEPS, record_frames)?;
    Ok((check_success(&r.terminal), r))
}
