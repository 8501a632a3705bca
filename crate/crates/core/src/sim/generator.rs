//! Seeded procedural task library.
//!
//! Candidate scenes are drawn from a small set of templates and kept only
//! when exhaustive enumeration of the (bounded) action space finds at least
//! one solution, and not so many that random play trivially succeeds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::env::execute;
use super::geom::{Bounds, Vec2};
use super::render::{render_observation, Observation};
use super::scene::{Body, EnvKind, Role, Scene};
use crate::agent::action::{EnvAction, TimedEvent, MAX_BODY_INDEX};

/// Largest event tick used when enumerating TimedRemove actions (5 s).
pub const ENUM_MAX_TICK: u32 = 10;
/// Upper bound on solutions for a GridDrop task to be accepted.
pub const GRIDDROP_MAX_SOLUTIONS: usize = 24;
/// Upper bound on the solved fraction of the enumerable TimedRemove space.
pub const TIMEDREMOVE_MAX_FRACTION: f64 = 0.35;
const MAX_CANDIDATES: usize = 5000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    /// Generator seed the task was drawn with.
    pub seed: u64,
    pub scene: Scene,
}

impl Task {
    pub fn env(&self) -> EnvKind {
        self.scene.env
    }

    pub fn observation(&self) -> Observation {
        render_observation(&self.scene)
    }

    /// The finite action space used for enumeration and random play.
    pub fn action_space(&self) -> Vec<EnvAction> {
        action_space(&self.scene)
    }
}

/// GridDrop: all 512 placements. TimedRemove: every assignment of
/// "never" or a tick in `0..=ENUM_MAX_TICK` to each removable body.
pub fn action_space(scene: &Scene) -> Vec<EnvAction> {
    match scene.env {
        EnvKind::GridDrop => EnvAction::all_grid(),
        EnvKind::TimedRemove => {
            let ids = scene.removable_ids();
            let choices = ENUM_MAX_TICK as usize + 2;
            let total = choices.pow(ids.len() as u32);
            let mut out = Vec::with_capacity(total);
            for code in 0..total {
                let mut c = code;
                let mut events = Vec::new();
                for &id in &ids {
                    let slot = c % choices;
                    c /= choices;
                    if slot > 0 {
                        events.push(TimedEvent {
                            index: id,
                            tick: slot as u32 - 1,
                        });
                    }
                }
                out.push(EnvAction::events(events).expect("enumerated events are valid"));
            }
            out
        }
    }
}

fn bounds() -> Bounds {
    Bounds::new(Vec2::ZERO, Vec2::new(8.0, 8.0))
}

/// Green ball on a ledge; knock it into a basket whose floor is the target.
fn griddrop_candidate(rng: &mut ChaCha8Rng) -> Scene {
    let mut s = Scene::new(EnvKind::GridDrop, bounds());
    let mirror = rng.gen_bool(0.5);
    let fx = |x: f64| if mirror { 8.0 - x } else { x };
    let h: f64 = rng.gen_range(2.0..4.5);
    let edge: f64 = rng.gen_range(2.5..4.5);
    let len = rng.gen_range(1.5..3.0);
    let rg = rng.gen_range(0.25..0.45);
    let inset = rng.gen_range(rg + 0.1..1.2);
    let gap = rng.gen_range(0.4..2.2);
    let width = rng.gen_range(0.9..1.6);
    let wall = rng.gen_range(0.5..0.9);
    let xb = (edge + gap).min(7.7 - width);

    s.bodies.push(Body::segment(
        0,
        Role::Static,
        Vec2::new(fx(edge - len), h),
        Vec2::new(fx(edge), h),
    ));
    s.bodies.push(Body::circle(
        1,
        Role::GreenBall,
        Vec2::new(fx(edge - inset), h + rg),
        rg,
    ));
    s.bodies.push(Body::segment(
        2,
        Role::Target,
        Vec2::new(fx(xb), 0.05),
        Vec2::new(fx(xb + width), 0.05),
    ));
    s.bodies.push(Body::segment(
        3,
        Role::Static,
        Vec2::new(fx(xb), 0.0),
        Vec2::new(fx(xb), wall),
    ));
    s.bodies.push(Body::segment(
        4,
        Role::Static,
        Vec2::new(fx(xb + width), 0.0),
        Vec2::new(fx(xb + width), wall),
    ));
    if rng.gen_bool(0.35) {
        let ox = edge - inset + rng.gen_range(-0.8..0.8);
        let oy = h + rng.gen_range(1.2..2.5);
        let half = rng.gen_range(0.3..0.7);
        s.bodies.push(Body::segment(
            5,
            Role::Static,
            Vec2::new(fx(ox - half), oy),
            Vec2::new(fx(ox + half), oy),
        ));
    }
    s
}

/// A red ball rolls along a removable plank over catch trays and open
/// gaps; a second plank may hold another red ball.
fn timedremove_candidate(rng: &mut ChaCha8Rng) -> Scene {
    let mut s = Scene::new(EnvKind::TimedRemove, bounds());
    s.abyss_y = Some(1.0);
    let mut id = 0u32;
    let mut next = || {
        id += 1;
        id - 1
    };
    let y1 = rng.gen_range(4.0..6.0);
    let r = rng.gen_range(0.2..0.35);
    let x0 = rng.gen_range(0.6..1.5);
    let vx = rng.gen_range(0.8..1.6);
    let plank = next();
    s.bodies.push(
        Body::segment(
            plank,
            Role::Removable,
            Vec2::new(0.2, y1),
            Vec2::new(7.8, y1),
        )
        .with_removable(true),
    );
    s.bodies.push(
        Body::circle(next(), Role::RedBall, Vec2::new(x0, y1 + r), r)
            .with_velocity(Vec2::new(vx, 0.0)),
    );

    // Catch trays between the plank and the abyss.
    let yc = rng.gen_range(1.8..3.0);
    let mut x: f64 = rng.gen_range(0.3..1.5);
    let mut trays = 0;
    while x < 7.0 && trays < 3 {
        trays += 1;
        let w = rng.gen_range(0.8f64..2.0).min(7.8 - x);
        if w < 0.6 {
            break;
        }
        let lip = 0.5;
        s.bodies.push(Body::segment(
            next(),
            Role::Static,
            Vec2::new(x, yc),
            Vec2::new(x + w, yc),
        ));
        s.bodies.push(Body::segment(
            next(),
            Role::Static,
            Vec2::new(x, yc),
            Vec2::new(x, yc + lip),
        ));
        s.bodies.push(Body::segment(
            next(),
            Role::Static,
            Vec2::new(x + w, yc),
            Vec2::new(x + w, yc + lip),
        ));
        x += w + rng.gen_range(0.8..2.0);
    }

    if rng.gen_bool(0.5) {
        // A gate on the plank that stops the rolling ball until removed.
        let xg = rng.gen_range(3.0..6.5);
        s.bodies.push(
            Body::segment(
                next(),
                Role::Removable,
                Vec2::new(xg, y1),
                Vec2::new(xg, y1 + 0.8),
            )
            .with_removable(true),
        );
    }
    if rng.gen_bool(0.5) {
        let y2 = rng.gen_range(6.3..7.3);
        let xs = rng.gen_range(1.0..6.0);
        let r2 = rng.gen_range(0.2..0.35);
        s.bodies.push(
            Body::segment(
                next(),
                Role::Removable,
                Vec2::new(xs, y2),
                Vec2::new(xs + 1.2, y2),
            )
            .with_removable(true),
        );
        s.bodies.push(Body::circle(
            next(),
            Role::RedBall,
            Vec2::new(xs + 0.6, y2 + r2),
            r2,
        ));
    }
    s
}

fn candidate(env: EnvKind, rng: &mut ChaCha8Rng) -> Scene {
    match env {
        EnvKind::GridDrop => griddrop_candidate(rng),
        EnvKind::TimedRemove => timedremove_candidate(rng),
    }
}

/// Success outcome of every action in the enumerable space, in order.
/// Invalid actions count as failures.
pub fn enumerate_outcomes(scene: &Scene) -> Vec<(EnvAction, bool)> {
    action_space(scene)
        .into_iter()
        .map(|a| {
            let ok = matches!(execute(scene, &a, false), Ok((true, _)));
            (a, ok)
        })
        .collect()
}

fn acceptable(scene: &Scene) -> bool {
    if scene.validate().is_err() || scene.bodies.iter().any(|b| b.id >= MAX_BODY_INDEX) {
        return false;
    }
    let outcomes = enumerate_outcomes(scene);
    let k = outcomes.iter().filter(|(_, ok)| *ok).count();
    match scene.env {
        EnvKind::GridDrop => (1..=GRIDDROP_MAX_SOLUTIONS).contains(&k),
        EnvKind::TimedRemove => {
            k >= 1 && (k as f64) <= TIMEDREMOVE_MAX_FRACTION * outcomes.len() as f64
        }
    }
}

/// Draws `count` solvable tasks. Deterministic in `(env, count, seed)`.
pub fn generate_tasks(env: EnvKind, count: usize, seed: u64) -> Vec<Task> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::with_capacity(count);
    let mut tried = 0;
    while tasks.len() < count && tried < MAX_CANDIDATES {
        tried += 1;
        let scene = candidate(env, &mut rng);
        if acceptable(&scene) {
            tasks.push(Task {
                id: format!("{}-{}-{:03}", env.name(), seed, tasks.len()),
                seed,
                scene,
            });
        }
    }
    tasks
}
