use serde::{Deserialize, Serialize};

use super::geom::{Bounds, Vec2};
use crate::error::{Error, Result};

pub const DEFAULT_GRAVITY: Vec2 = Vec2::new(0.0, -9.8);
pub const DEFAULT_RESTITUTION: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    #[serde(alias = "griddrop")]
    GridDrop,
    #[serde(alias = "timedremove")]
    TimedRemove,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::GridDrop => "griddrop",
            EnvKind::TimedRemove => "timedremove",
        }
    }

    pub fn parse(s: &str) -> Option<EnvKind> {
        match s.to_ascii_lowercase().as_str() {
            "griddrop" | "grid-drop" => Some(EnvKind::GridDrop),
            "timedremove" | "timed-remove" => Some(EnvKind::TimedRemove),
            _ => None,
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Agent,
    GreenBall,
    Target,
    RedBall,
    Removable,
    Static,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::Agent,
        Role::GreenBall,
        Role::Target,
        Role::RedBall,
        Role::Removable,
        Role::Static,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Role::Agent => "agent",
            Role::GreenBall => "green-ball",
            Role::Target => "target",
            Role::RedBall => "red-ball",
            Role::Removable => "removable",
            Role::Static => "static",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Circle {
        radius: f64,
    },
    /// Static segment; endpoints are in world coordinates.
    Segment {
        a: Vec2,
        b: Vec2,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub id: u32,
    pub shape: Shape,
    pub position: Vec2,
    pub velocity: Vec2,
    pub role: Role,
    pub removable: bool,
    /// Simulation time at which the body vanishes.
    pub remove_at: Option<f64>,
    pub active: bool,
}

impl Body {
    pub fn circle(id: u32, role: Role, position: Vec2, radius: f64) -> Self {
        Self {
            id,
            shape: Shape::Circle { radius },
            position,
            velocity: Vec2::ZERO,
            role,
            removable: false,
            remove_at: None,
            active: true,
        }
    }

    pub fn segment(id: u32, role: Role, a: Vec2, b: Vec2) -> Self {
        Self {
            id,
            shape: Shape::Segment { a, b },
            position: (a + b) * 0.5,
            velocity: Vec2::ZERO,
            role,
            removable: false,
            remove_at: None,
            active: true,
        }
    }

    pub fn with_removable(mut self, removable: bool) -> Self {
        self.removable = removable;
        self
    }

    pub fn with_velocity(mut self, v: Vec2) -> Self {
        self.velocity = v;
        self
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(self.shape, Shape::Circle { .. })
    }

    pub fn radius(&self) -> Option<f64> {
        match self.shape {
            Shape::Circle { radius } => Some(radius),
            Shape::Segment { .. } => None,
        }
    }

    /// Unit-density disc mass; segments are immovable.
    pub fn inv_mass(&self) -> f64 {
        match self.shape {
            Shape::Circle { radius } => 1.0 / (std::f64::consts::PI * radius * radius),
            Shape::Segment { .. } => 0.0,
        }
    }

    pub fn mass(&self) -> f64 {
        match self.shape {
            Shape::Circle { radius } => std::f64::consts::PI * radius * radius,
            Shape::Segment { .. } => f64::INFINITY,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.shape {
            Shape::Circle { radius } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::Format(format!(
                        "body {}: radius must be > 0",
                        self.id
                    )));
                }
            }
            Shape::Segment { a, b } => {
                if a == b {
                    return Err(Error::Format(format!(
                        "body {}: segment endpoints must differ",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Complete physical state of a puzzle instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub env: EnvKind,
    pub bodies: Vec<Body>,
    pub gravity: Vec2,
    pub restitution: f64,
    pub bounds: Bounds,
    /// TimedRemove only: red balls must end below this height.
    pub abyss_y: Option<f64>,
    pub time: f64,
    /// GridDrop contact latch: set once the green ball touches the target.
    pub target_touched: bool,
}

impl Scene {
    pub fn new(env: EnvKind, bounds: Bounds) -> Self {
        Self {
            env,
            bodies: Vec::new(),
            gravity: DEFAULT_GRAVITY,
            restitution: DEFAULT_RESTITUTION,
            bounds,
            abyss_y: None,
            time: 0.0,
            target_touched: false,
        }
    }

    pub fn body(&self, id: u32) -> Option<&Body> {
        self.bodies.iter().find(|b| b.id == id)
    }

    pub fn body_mut(&mut self, id: u32) -> Option<&mut Body> {
        self.bodies.iter_mut().find(|b| b.id == id)
    }

    pub fn next_id(&self) -> u32 {
        self.bodies.iter().map(|b| b.id + 1).max().unwrap_or(0)
    }

    pub fn active_bodies(&self) -> impl Iterator<Item = &Body> {
        self.bodies.iter().filter(|b| b.active)
    }

    /// Ids of bodies that may be scheduled for removal, ascending.
    pub fn removable_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .bodies
            .iter()
            .filter(|b| b.removable)
            .map(|b| b.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.restitution) {
            return Err(Error::Format("restitution must lie in [0, 1]".into()));
        }
        if !(self.bounds.width() > 0.0 && self.bounds.height() > 0.0) {
            return Err(Error::Format("bounds must have positive extent".into()));
        }
        let mut ids: Vec<u32> = self.bodies.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Format("duplicate body id".into()));
        }
        for b in &self.bodies {
            b.validate()?;
            let inside = match b.shape {
                Shape::Circle { .. } => self.bounds.contains(b.position),
                Shape::Segment { a, b: e } => self.bounds.contains(a) && self.bounds.contains(e),
            };
            if !inside {
                return Err(Error::Format(format!("body {} lies outside bounds", b.id)));
            }
        }
        match self.env {
            EnvKind::GridDrop => {
                let greens = self
                    .bodies
                    .iter()
                    .filter(|b| b.role == Role::GreenBall)
                    .count();
                if greens != 1 {
                    return Err(Error::Format(format!(
                        "griddrop scene needs exactly one green ball, found {greens}"
                    )));
                }
            }
            EnvKind::TimedRemove => {
                if !self.bodies.iter().any(|b| b.role == Role::RedBall) {
                    return Err(Error::Format("timedremove scene needs a red ball".into()));
                }
                if self.abyss_y.is_none() {
                    return Err(Error::Format(
                        "timedremove scene needs an abyss height".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Kinetic plus gravitational potential energy of active dynamic bodies.
    pub fn energy(&self) -> f64 {
        self.bodies
            .iter()
            .filter(|b| b.active && b.is_dynamic())
            .map(|b| {
                let m = b.mass();
                0.5 * m * b.velocity.length_sq()
                    - m * self.gravity.dot(b.position - self.bounds.min)
            })
            .sum()
    }
}
