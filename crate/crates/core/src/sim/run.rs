use serde::{Deserialize, Serialize};

use super::geom::Vec2;
use super::physics::{self, DT, STABILITY_WINDOW, V_EPS};
use super::render::{render_observation, Observation};
use super::scene::Scene;
use crate::error::{Error, Result};

/// Frames sampled from every post-action trajectory.
pub const FRAME_COUNT: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyState {
    pub id: u32,
    pub position: Vec2,
    pub velocity: Vec2,
    pub active: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub step: usize,
    pub time: f64,
    pub observation: Observation,
    pub bodies: Vec<BodyState>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSet {
    pub frames: Vec<Frame>,
    /// True when the run settled before the step cap.
    pub stable: bool,
    /// Simulated duration covered by the frames, in seconds.
    pub span: f64,
}

/// Everything observed while running a scene to rest.
#[derive(Clone, Debug, PartialEq)]
pub struct SimRun {
    pub terminal: Scene,
    pub steps: usize,
    pub stable: bool,
    /// Body id pairs that came into contact at least once, in order of first contact.
    pub touches: Vec<(u32, u32)>,
    pub frames: Option<FrameSet>,
}

fn snapshot(scene: &Scene) -> Vec<BodyState> {
    scene
        .bodies
        .iter()
        .map(|b| BodyState {
            id: b.id,
            position: b.position,
            velocity: b.velocity,
            active: b.active,
        })
        .collect()
}

fn restore(base: &Scene, states: &[BodyState], time: f64) -> Scene {
    let mut s = base.clone();
    for (b, st) in s.bodies.iter_mut().zip(states) {
        b.position = st.position;
        b.velocity = st.velocity;
        b.active = st.active;
    }
    s.time = time;
    s
}

/// Step indices of `FRAME_COUNT` uniformly spaced frames over `steps` steps.
pub fn frame_steps(steps: usize) -> [usize; FRAME_COUNT] {
    let mut out = [0; FRAME_COUNT];
    for (j, slot) in out.iter_mut().enumerate() {
        *slot = (j * steps + (FRAME_COUNT - 1) / 2) / (FRAME_COUNT - 1);
    }
    out
}

/// Runs the scene until every body is at rest for the stability window,
/// or `max_steps` is reached.
pub fn run(scene: &Scene, max_steps: usize, record_frames: bool) -> Result<SimRun> {
    let mut s = scene.clone();
    let mut touches = Vec::new();
    physics::prime(&mut s, Some(&mut touches));
    let mut history = Vec::new();
    if record_frames {
        history.push(snapshot(&s));
    }
    let mut calm = 0usize;
    let mut steps = 0usize;
    let mut stable = false;
    while steps < max_steps {
        physics::step_in_place(&mut s, DT, Some(&mut touches))?;
        steps += 1;
        if record_frames {
            history.push(snapshot(&s));
        }
        if physics::max_speed(&s) < V_EPS && !physics::has_pending_removal(&s) {
            calm += 1;
            if calm >= STABILITY_WINDOW {
                stable = true;
                break;
            }
        } else {
            calm = 0;
        }
    }
    let frames = record_frames.then(|| {
        let frames = frame_steps(steps)
            .iter()
            .map(|&k| {
                let time = scene.time + k as f64 * DT;
                let at = restore(scene, &history[k], time);
                Frame {
                    step: k,
                    time,
                    observation: render_observation(&at),
                    bodies: history[k].clone(),
                }
            })
            .collect();
        FrameSet {
            frames,
            stable,
            span: steps as f64 * DT,
        }
    });
    Ok(SimRun {
        terminal: s,
        steps,
        stable,
        touches,
        frames,
    })
}

/// Runs to rest and returns five uniformly spaced frames plus the final scene.
pub fn simulate_until_stable(scene: &Scene, max_steps: usize) -> Result<(FrameSet, Scene)> {
    if max_steps < FRAME_COUNT {
        return Err(Error::Config(format!(
            "max-steps must be at least {FRAME_COUNT}"
        )));
    }
    let r = run(scene, max_steps, true)?;
    let frames = r.frames.expect("frames were recorded");
    Ok((frames, r.terminal))
}
