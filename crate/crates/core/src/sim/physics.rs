//! Semi-implicit Euler integrator with speculative impulse contacts.
//!
//! Contacts are predicted from post-gravity velocities so bodies stop at
//! the contact surface instead of sinking into it. Fast approaches are
//! reflected with restitution against the pre-gravity velocity; slow ones
//! are made perfectly inelastic. Both impulses are bounded by the
//! approach speed, so total mechanical energy never grows.

use super::geom::{closest_on_segment, Vec2};
use super::scene::{Role, Scene, Shape};
use crate::error::{Error, Result};

pub const DT: f64 = 0.01;
pub const V_EPS: f64 = 1e-3;
pub const STABILITY_WINDOW: usize = 25;
pub const DEFAULT_MAX_STEPS: usize = 2000;

/// Approach speed below which contacts are treated as inelastic.
pub const BOUNCE_THRESHOLD: f64 = 0.2;
/// Gap below which two bodies count as touching.
pub const TOUCH_TOL: f64 = 0.01;
const RESTING_SLOP: f64 = 1e-6;
const PENETRATION_SLOP: f64 = 1e-4;
const SOLVER_ITERATIONS: usize = 10;

#[derive(Clone, Copy, Debug)]
enum Other {
    Body(usize),
    Fixed,
}

#[derive(Clone, Copy, Debug)]
struct Contact {
    i: usize,
    other: Other,
    /// Points from the other body towards body `i`.
    normal: Vec2,
    gap: f64,
}

fn circle_against(scene: &Scene, i: usize, j: usize) -> Option<(Vec2, f64)> {
    let bi = &scene.bodies[i];
    let bj = &scene.bodies[j];
    let r = bi.radius()?;
    match bj.shape {
        Shape::Circle { radius: rj } => {
            let d = bi.position - bj.position;
            let dist = d.length();
            let n = if dist > 0.0 {
                d * (1.0 / dist)
            } else {
                Vec2::new(0.0, 1.0)
            };
            Some((n, dist - r - rj))
        }
        Shape::Segment { a, b } => {
            let p = closest_on_segment(bi.position, a, b);
            let d = bi.position - p;
            let dist = d.length();
            let n = if dist > 0.0 {
                d * (1.0 / dist)
            } else {
                let t = (b - a).perp();
                let t = t * (1.0 / t.length());
                if t.y < 0.0 {
                    -t
                } else {
                    t
                }
            };
            Some((n, dist - r))
        }
    }
}

fn wall_contacts(scene: &Scene, i: usize, out: &mut Vec<(Vec2, f64)>) {
    let b = &scene.bodies[i];
    let Some(r) = b.radius() else { return };
    let p = b.position;
    let lo = scene.bounds.min;
    let hi = scene.bounds.max;
    out.push((Vec2::new(0.0, 1.0), p.y - r - lo.y));
    out.push((Vec2::new(0.0, -1.0), hi.y - (p.y + r)));
    out.push((Vec2::new(1.0, 0.0), p.x - r - lo.x));
    out.push((Vec2::new(-1.0, 0.0), hi.x - (p.x + r)));
}

fn relative_normal_velocity(scene: &Scene, c: &Contact) -> f64 {
    let vi = scene.bodies[c.i].velocity;
    let vj = match c.other {
        Other::Body(j) => scene.bodies[j].velocity,
        Other::Fixed => Vec2::ZERO,
    };
    (vi - vj).dot(c.normal)
}

fn relative_bias(bias: &[Vec2], c: &Contact) -> f64 {
    let bj = match c.other {
        Other::Body(j) => bias[j],
        Other::Fixed => Vec2::ZERO,
    };
    (bias[c.i] - bj).dot(c.normal)
}

fn inverse_masses(scene: &Scene, c: &Contact) -> (f64, f64) {
    let inv_j = match c.other {
        Other::Body(j) => scene.bodies[j].inv_mass(),
        Other::Fixed => 0.0,
    };
    (scene.bodies[c.i].inv_mass(), inv_j)
}

fn apply_normal_impulse(scene: &mut Scene, c: &Contact, target: f64) {
    let vn = relative_normal_velocity(scene, c);
    if vn >= target {
        return;
    }
    let (inv_i, inv_j) = inverse_masses(scene, c);
    let k = inv_i + inv_j;
    if k == 0.0 {
        return;
    }
    let p = c.normal * ((target - vn) / k);
    scene.bodies[c.i].velocity += p * inv_i;
    if let Other::Body(j) = c.other {
        scene.bodies[j].velocity -= p * inv_j;
    }
}

/// Sets the relative normal bias velocity of a contact to `target`.
fn set_bias(scene: &Scene, bias: &mut [Vec2], c: &Contact, target: f64) {
    let (inv_i, inv_j) = inverse_masses(scene, c);
    let k = inv_i + inv_j;
    if k == 0.0 {
        return;
    }
    let p = c.normal * ((target - relative_bias(bias, c)) / k);
    bias[c.i] += p * inv_i;
    if let Other::Body(j) = c.other {
        bias[j] -= p * inv_j;
    }
}

fn collect_contacts(scene: &Scene, dt: f64) -> Vec<Contact> {
    let n = scene.bodies.len();
    let mut contacts = Vec::new();
    let mut walls = Vec::with_capacity(4);
    let g = scene.gravity * dt;
    for i in 0..n {
        let bi = &scene.bodies[i];
        if !bi.active || !bi.is_dynamic() {
            continue;
        }
        let vi = bi.velocity + g;
        for j in 0..n {
            if j == i || !scene.bodies[j].active {
                continue;
            }
            let dynamic_j = scene.bodies[j].is_dynamic();
            if dynamic_j && j < i {
                continue;
            }
            let Some((normal, gap)) = circle_against(scene, i, j) else {
                continue;
            };
            let vj = if dynamic_j {
                scene.bodies[j].velocity + g
            } else {
                Vec2::ZERO
            };
            let vn = (vi - vj).dot(normal);
            if gap + vn.min(0.0) * dt <= RESTING_SLOP {
                let other = if dynamic_j {
                    Other::Body(j)
                } else {
                    Other::Fixed
                };
                contacts.push(Contact {
                    i,
                    other,
                    normal,
                    gap,
                });
            }
        }
        walls.clear();
        wall_contacts(scene, i, &mut walls);
        for &(normal, gap) in &walls {
            let vn = vi.dot(normal);
            if gap + vn.min(0.0) * dt <= RESTING_SLOP {
                contacts.push(Contact {
                    i,
                    other: Other::Fixed,
                    normal,
                    gap,
                });
            }
        }
    }
    contacts
}

fn check_finite(scene: &Scene) -> Result<()> {
    for b in &scene.bodies {
        if !(b.position.is_finite() && b.velocity.is_finite()) {
            return Err(Error::SimulationDiverged {
                time: scene.time,
                body: b.id,
            });
        }
    }
    Ok(())
}

/// Bodies whose scheduled removal time has been reached vanish.
fn apply_removals(scene: &mut Scene) {
    let now = scene.time;
    for b in scene.bodies.iter_mut() {
        if b.active && b.remove_at.is_some_and(|t| t <= now + 1e-9) {
            b.active = false;
        }
    }
}

fn resolve_penetration(scene: &mut Scene) {
    let n = scene.bodies.len();
    for i in 0..n {
        if !scene.bodies[i].active || !scene.bodies[i].is_dynamic() {
            continue;
        }
        for j in 0..n {
            if j == i || !scene.bodies[j].active {
                continue;
            }
            let dynamic_j = scene.bodies[j].is_dynamic();
            if dynamic_j && j < i {
                continue;
            }
            let Some((normal, gap)) = circle_against(scene, i, j) else {
                continue;
            };
            if gap >= -PENETRATION_SLOP {
                continue;
            }
            let depth = -gap - PENETRATION_SLOP;
            let inv_i = scene.bodies[i].inv_mass();
            let inv_j = scene.bodies[j].inv_mass();
            let share = depth / (inv_i + inv_j);
            scene.bodies[i].position += normal * (share * inv_i);
            if dynamic_j {
                scene.bodies[j].position -= normal * (share * inv_j);
            }
        }
    }
    // Bounds are hard limits.
    let lo = scene.bounds.min;
    let hi = scene.bounds.max;
    for b in scene.bodies.iter_mut() {
        if let Some(r) = b.radius() {
            if lo.x + r <= hi.x - r {
                b.position.x = b.position.x.clamp(lo.x + r, hi.x - r);
            }
            if lo.y + r <= hi.y - r {
                b.position.y = b.position.y.clamp(lo.y + r, hi.y - r);
            }
        }
    }
}

/// Position correction can lift bodies against gravity. Any energy it adds
/// is taken back out of the kinetic term. If that is not enough the step
/// is undone and the bodies are left at rest where they started.
fn cap_energy(scene: &mut Scene, limit: f64, positions_before: &[Vec2]) {
    let total = scene.energy();
    if !(total > limit) || scene.restitution > 1.0 {
        return;
    }
    let kinetic: f64 = scene
        .bodies
        .iter()
        .filter(|b| b.active && b.is_dynamic())
        .map(|b| 0.5 * b.mass() * b.velocity.dot(b.velocity))
        .sum();
    let allowed = kinetic - (total - limit);
    if allowed > 0.0 && kinetic > 0.0 {
        let scale = (allowed / kinetic).sqrt();
        for b in scene
            .bodies
            .iter_mut()
            .filter(|b| b.active && b.is_dynamic())
        {
            b.velocity = b.velocity * scale;
        }
    } else {
        for (b, &p) in scene.bodies.iter_mut().zip(positions_before) {
            if b.active && b.is_dynamic() {
                b.position = p;
                b.velocity = Vec2::ZERO;
            }
        }
    }
}

fn update_touches(scene: &mut Scene, touches: Option<&mut Vec<(u32, u32)>>) {
    let n = scene.bodies.len();
    let mut latch = scene.target_touched;
    let mut log = touches;
    for i in 0..n {
        let bi = &scene.bodies[i];
        if !bi.active || !bi.is_dynamic() {
            continue;
        }
        for j in 0..n {
            let bj = &scene.bodies[j];
            if j == i || !bj.active || (bj.is_dynamic() && j < i) {
                continue;
            }
            let Some((_, gap)) = circle_against(scene, i, j) else {
                continue;
            };
            if gap > TOUCH_TOL {
                continue;
            }
            let pair = (bi.role, bj.role);
            if matches!(
                pair,
                (Role::GreenBall, Role::Target) | (Role::Target, Role::GreenBall)
            ) {
                latch = true;
            }
            if let Some(log) = log.as_deref_mut() {
                let key = (bi.id.min(bj.id), bi.id.max(bj.id));
                if !log.contains(&key) {
                    log.push(key);
                }
            }
        }
    }
    scene.target_touched = latch;
}

/// Records the initial contact state before any integration.
pub(crate) fn prime(scene: &mut Scene, touches: Option<&mut Vec<(u32, u32)>>) {
    update_touches(scene, touches);
}

pub(crate) fn step_in_place(
    scene: &mut Scene,
    dt: f64,
    touches: Option<&mut Vec<(u32, u32)>>,
) -> Result<()> {
    let removing = scene
        .bodies
        .iter()
        .any(|b| b.active && b.remove_at.is_some_and(|t| t <= scene.time + 1e-9));
    apply_removals(scene);
    let energy_before = if removing { None } else { Some(scene.energy()) };
    let positions_before: Vec<Vec2> = scene.bodies.iter().map(|b| b.position).collect();
    let contacts = collect_contacts(scene, dt);

    // Restitution against pre-gravity approach speed. A bounce that happens
    // part way through the step also gets a position-only bias velocity, so
    // the body ends where it would have after reflecting at the surface
    // rather than hovering at its starting gap.
    let e = scene.restitution;
    let mut bias = vec![Vec2::ZERO; scene.bodies.len()];
    for c in &contacts {
        let vn = relative_normal_velocity(scene, c);
        if vn < -BOUNCE_THRESHOLD {
            apply_normal_impulse(scene, c, -e * vn);
            if c.gap > RESTING_SLOP {
                let u = -vn;
                let gap_end = (e * (u * dt - c.gap)).max(0.0);
                set_bias(scene, &mut bias, c, (gap_end - c.gap) / dt - e * u);
            }
        }
    }

    let g = scene.gravity * dt;
    for b in scene.bodies.iter_mut() {
        if b.active && b.is_dynamic() {
            b.velocity += g;
        }
    }

    for _ in 0..SOLVER_ITERATIONS {
        for c in &contacts {
            let target = -c.gap.max(0.0) / dt - relative_bias(&bias, c);
            apply_normal_impulse(scene, c, target);
        }
    }

    for (b, &vb) in scene.bodies.iter_mut().zip(&bias) {
        if b.active && b.is_dynamic() {
            b.position += (b.velocity + vb) * dt;
        }
    }
    resolve_penetration(scene);
    if let Some(e0) = energy_before {
        cap_energy(scene, e0, &positions_before);
    }
    scene.time += dt;
    check_finite(scene)?;
    update_touches(scene, touches);
    Ok(())
}

/// Advances the scene by one time step.
pub fn step(scene: &Scene, dt: f64) -> Result<Scene> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Numeric(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let mut next = scene.clone();
    step_in_place(&mut next, dt, None)?;
    Ok(next)
}

pub(crate) fn max_speed(scene: &Scene) -> f64 {
    scene
        .bodies
        .iter()
        .filter(|b| b.active && b.is_dynamic())
        .map(|b| b.velocity.length())
        .fold(0.0, f64::max)
}

pub(crate) fn has_pending_removal(scene: &Scene) -> bool {
    scene
        .bodies
        .iter()
        .any(|b| b.active && b.remove_at.is_some())
}
