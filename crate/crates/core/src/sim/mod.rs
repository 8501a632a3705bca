//! Deterministic 2D physics and the two puzzle environments.

pub mod cache;
pub mod env;
pub mod generator;
pub mod geom;
pub mod physics;
pub mod render;
pub mod run;
pub mod scene;
pub mod scene_file;

pub use cache::OutcomeCache;
pub use env::{apply_action, check_success, execute};
pub use generator::{generate_tasks, Task};
pub use geom::{Bounds, Vec2};
pub use physics::step;
pub use render::{render_observation, Annotation, Observation, OverlayKind};
pub use run::{simulate_until_stable, FrameSet, SimRun};
pub use scene::{Body, EnvKind, Role, Scene, Shape};
