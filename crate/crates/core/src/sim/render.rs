//! Annotated observations of a scene.

use serde::{Deserialize, Serialize};

use super::geom::{closest_on_segment, Vec2};
use super::scene::{EnvKind, Role, Scene, Shape};
use crate::agent::action::MAX_BODY_INDEX;

/// Side of the square debugging raster.
pub const RASTER: usize = 32;
/// Side of the annotation overlay grid.
pub const GRID: usize = 8;

const GRID_CHANNELS_DROP: [Role; 4] = [Role::GreenBall, Role::Target, Role::Static, Role::Agent];
const GRID_CHANNELS_REMOVE: [Role; 3] = [Role::RedBall, Role::Removable, Role::Static];
const SLOT_WIDTH: usize = 7;
const SPEED_SCALE: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlayKind {
    Grid8x8,
    IndexIds,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: u32,
    pub role: Role,
    /// Overlay cell of the element's reference point, 1..=64 row-major from top-left.
    pub cell: u8,
    pub removable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub env: EnvKind,
    /// `RASTER * RASTER` cells, top row first; 0 = empty, otherwise role index + 1.
    pub raw_grid: Vec<u8>,
    pub annotations: Vec<Annotation>,
    pub overlay: OverlayKind,
    pub features: Vec<f64>,
}

pub fn feature_dim(env: EnvKind) -> usize {
    match env {
        EnvKind::GridDrop => GRID_CHANNELS_DROP.len() * GRID * GRID + 7,
        EnvKind::TimedRemove => {
            GRID_CHANNELS_REMOVE.len() * GRID * GRID + MAX_BODY_INDEX as usize * SLOT_WIDTH
        }
    }
}

pub fn overlay_for(env: EnvKind) -> OverlayKind {
    match env {
        EnvKind::GridDrop => OverlayKind::Grid8x8,
        EnvKind::TimedRemove => OverlayKind::IndexIds,
    }
}

/// Overlay cell (1..=64) containing a world point.
pub fn cell_of(scene: &Scene, p: Vec2) -> u8 {
    let b = &scene.bounds;
    let col = (((p.x - b.min.x) / b.width()) * GRID as f64)
        .floor()
        .clamp(0.0, GRID as f64 - 1.0);
    let row = (((b.max.y - p.y) / b.height()) * GRID as f64)
        .floor()
        .clamp(0.0, GRID as f64 - 1.0);
    (row as usize * GRID + col as usize + 1) as u8
}

fn rasterize(scene: &Scene) -> Vec<u8> {
    let mut grid = vec![0u8; RASTER * RASTER];
    let b = &scene.bounds;
    let cw = b.width() / RASTER as f64;
    let ch = b.height() / RASTER as f64;
    let half = 0.5 * cw.max(ch);
    // Static geometry first so moving bodies draw on top.
    let mut order: Vec<&super::scene::Body> = scene.active_bodies().collect();
    order.sort_by_key(|body| (body.is_dynamic(), body.id));
    for body in order {
        let code = body.role.index() as u8 + 1;
        for row in 0..RASTER {
            let y = b.max.y - (row as f64 + 0.5) * ch;
            for col in 0..RASTER {
                let x = b.min.x + (col as f64 + 0.5) * cw;
                let p = Vec2::new(x, y);
                let hit = match body.shape {
                    Shape::Circle { radius } => (p - body.position).length() <= radius.max(half),
                    Shape::Segment { a, b: e } => {
                        (p - closest_on_segment(p, a, e)).length() <= half
                    }
                };
                if hit {
                    grid[row * RASTER + col] = code;
                }
            }
        }
    }
    grid
}

fn coverage(raw: &[u8], role: Role) -> impl Iterator<Item = f64> + '_ {
    let code = role.index() as u8 + 1;
    let k = RASTER / GRID;
    (0..GRID * GRID).map(move |cell| {
        let (r0, c0) = ((cell / GRID) * k, (cell % GRID) * k);
        let mut hits = 0usize;
        for r in r0..r0 + k {
            for c in c0..c0 + k {
                if raw[r * RASTER + c] == code {
                    hits += 1;
                }
            }
        }
        hits as f64 / (k * k) as f64
    })
}

fn features(scene: &Scene, raw: &[u8]) -> Vec<f64> {
    let b = &scene.bounds;
    let nx = |x: f64| (x - b.min.x) / b.width();
    let ny = |y: f64| (y - b.min.y) / b.height();
    let mut f = Vec::with_capacity(feature_dim(scene.env));
    match scene.env {
        EnvKind::GridDrop => {
            for role in GRID_CHANNELS_DROP {
                f.extend(coverage(raw, role));
            }
            match scene.active_bodies().find(|x| x.role == Role::GreenBall) {
                Some(g) => f.extend([
                    nx(g.position.x),
                    ny(g.position.y),
                    g.radius().unwrap_or(0.0) / b.width(),
                ]),
                None => f.extend([0.0; 3]),
            }
            match scene.active_bodies().find(|x| x.role == Role::Target) {
                Some(t) => match t.shape {
                    Shape::Segment { a, b: e } => f.extend([nx(a.x), ny(a.y), nx(e.x), ny(e.y)]),
                    Shape::Circle { radius } => f.extend([
                        nx(t.position.x - radius),
                        ny(t.position.y),
                        nx(t.position.x + radius),
                        ny(t.position.y),
                    ]),
                },
                None => f.extend([0.0; 4]),
            }
        }
        EnvKind::TimedRemove => {
            for role in GRID_CHANNELS_REMOVE {
                f.extend(coverage(raw, role));
            }
            for slot in 0..MAX_BODY_INDEX {
                match scene.bodies.iter().find(|x| x.id == slot && x.active) {
                    Some(body) => f.extend([
                        1.0,
                        nx(body.position.x),
                        ny(body.position.y),
                        body.velocity.x / SPEED_SCALE,
                        body.velocity.y / SPEED_SCALE,
                        if body.removable { 1.0 } else { 0.0 },
                        if body.role == Role::RedBall { 1.0 } else { 0.0 },
                    ]),
                    None => f.extend([0.0; SLOT_WIDTH]),
                }
            }
        }
    }
    debug_assert_eq!(f.len(), feature_dim(scene.env));
    f
}

/// Renders the annotated view the agent sees.
pub fn render_observation(scene: &Scene) -> Observation {
    let raw_grid = rasterize(scene);
    let mut annotations: Vec<Annotation> = scene
        .active_bodies()
        .map(|body| Annotation {
            id: body.id,
            role: body.role,
            cell: cell_of(scene, body.position),
            removable: body.removable,
        })
        .collect();
    annotations.sort_by_key(|a| a.id);
    let features = features(scene, &raw_grid);
    Observation {
        env: scene.env,
        raw_grid,
        annotations,
        overlay: overlay_for(scene.env),
        features,
    }
}

impl Observation {
    /// Ids of removable elements, ascending.
    pub fn removable_ids(&self) -> Vec<u32> {
        self.annotations
            .iter()
            .filter(|a| a.removable)
            .map(|a| a.id)
            .collect()
    }

    /// Text dump of the raster, one character per cell.
    pub fn ascii(&self) -> String {
        const GLYPHS: [char; 7] = ['.', 'A', 'G', 'T', 'R', 'B', '#'];
        let mut s = String::with_capacity(RASTER * (RASTER + 1));
        for row in self.raw_grid.chunks(RASTER) {
            s.extend(row.iter().map(|&c| GLYPHS[c as usize]));
            s.push('\n');
        }
        s
    }
}
