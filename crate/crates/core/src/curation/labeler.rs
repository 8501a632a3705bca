use serde::{Deserialize, Serialize};

use crate::sim::geom::closest_on_segment;
use crate::sim::run::{BodyState, FrameSet};
use crate::sim::{EnvKind, Role, Scene, Shape, Vec2};
use crate::worldmodel::OutcomeLabel;

/// Fraction of the scene width a body must travel to count as moved.
const MOVE_FRACTION: f64 = 0.01;
/// Contact tolerance as a fraction of the scene width.
const CONTACT_FRACTION: f64 = 0.02;

/// Which evidence the rule-based annotator may look at.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Labeler {
    /// All five post-action frames.
    #[default]
    FiveFrame,
    /// Only the initial and terminal states.
    TerminalOnly,
}

fn state(frame: &[BodyState], id: u32) -> Option<&BodyState> {
    frame.iter().find(|b| b.id == id)
}

fn target_distance(scene: &Scene, p: Vec2) -> f64 {
    scene
        .bodies
        .iter()
        .filter(|b| b.role == Role::Target)
        .map(|b| match b.shape {
            Shape::Segment { a, b: e } => (p - closest_on_segment(p, a, e)).length(),
            Shape::Circle { .. } => (p - b.position).length(),
        })
        .fold(f64::INFINITY, f64::min)
}

/// Outcome label of a simulated action. `start` is the scene after the
/// action was applied; `frames` its recorded trajectory.
pub fn auto_label(
    labeler: Labeler,
    start: &Scene,
    frames: &FrameSet,
    success: bool,
) -> OutcomeLabel {
    let width = start.bounds.width();
    let moved_eps = MOVE_FRACTION * width;
    let seen: Vec<&[BodyState]> = match labeler {
        Labeler::FiveFrame => frames.frames.iter().map(|f| f.bodies.as_slice()).collect(),
        Labeler::TerminalOnly => [frames.frames.first(), frames.frames.last()]
            .into_iter()
            .flatten()
            .map(|f| f.bodies.as_slice())
            .collect(),
    };
    let Some(first) = seen.first().copied() else {
        return OutcomeLabel::Other;
    };
    let displacement = |id: u32| {
        let p0 = state(first, id).map(|b| b.position);
        seen.iter()
            .filter_map(|f| Some((state(f, id)?.position - p0?).length()))
            .fold(0.0, f64::max)
    };
    match start.env {
        EnvKind::GridDrop => {
            if success {
                return OutcomeLabel::GreenReachesTarget;
            }
            let green = start.bodies.iter().find(|b| b.role == Role::GreenBall);
            let agent = start.bodies.iter().find(|b| b.role == Role::Agent);
            let (Some(green), Some(agent)) = (green, agent) else {
                return OutcomeLabel::Other;
            };
            let moved = displacement(green.id) > moved_eps;
            if labeler == Labeler::TerminalOnly {
                return if moved {
                    OutcomeLabel::AgentHitsGreen
                } else {
                    OutcomeLabel::NoContact
                };
            }
            let reach = green.radius().unwrap_or(0.0)
                + agent.radius().unwrap_or(0.0)
                + CONTACT_FRACTION * width;
            let contact = seen
                .iter()
                .any(|f| match (state(f, green.id), state(f, agent.id)) {
                    (Some(g), Some(a)) => (g.position - a.position).length() <= reach,
                    _ => false,
                });
            if !moved {
                return if contact {
                    OutcomeLabel::Blocked
                } else {
                    OutcomeLabel::NoContact
                };
            }
            let last = seen
                .last()
                .and_then(|f| state(f, green.id))
                .map_or(green.position, |b| b.position);
            if target_distance(start, last) < target_distance(start, green.position) {
                OutcomeLabel::Blocked
            } else {
                OutcomeLabel::AgentHitsGreen
            }
        }
        EnvKind::TimedRemove => {
            if success {
                return OutcomeLabel::BallFallsAbyss;
            }
            let reds: Vec<u32> = start
                .bodies
                .iter()
                .filter(|b| b.role == Role::RedBall)
                .map(|b| b.id)
                .collect();
            let moved = reds.iter().any(|&id| displacement(id) > moved_eps);
            if !moved {
                return OutcomeLabel::NoContact;
            }
            if labeler == Labeler::TerminalOnly {
                return OutcomeLabel::Blocked;
            }
            let abyss = start.abyss_y.unwrap_or(f64::NEG_INFINITY);
            let partial = reds.iter().any(|&id| {
                seen.iter()
                    .any(|f| state(f, id).is_some_and(|b| b.position.y < abyss))
            });
            if partial {
                OutcomeLabel::Other
            } else {
                OutcomeLabel::Blocked
            }
        }
    }
}
