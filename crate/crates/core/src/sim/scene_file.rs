//! Plain-text scene files.
//!
//! ```text
//! icprl-scene v1
//! task griddrop-7-000
//! env griddrop
//! gravity 0 -9.8
//! restitution 0.3
//! bounds 0 0 8 8
//! abyss 1            # timedremove only
//! time 0
//! body 0 segment static removable=0 active=1 remove-at=- a=1,3 b=4,3
//! body 1 circle green-ball removable=0 active=1 remove-at=- r=0.3 pos=3.5,3.3 vel=0,0
//! ```
//!
//! Numbers are written in Rust's shortest round-trip form, so a parsed
//! file reproduces the scene bit for bit. `#` starts a comment.

use std::fmt::Write as _;

use super::geom::{Bounds, Vec2};
use super::scene::{Body, EnvKind, Role, Scene, Shape};
use crate::error::{Error, Result};

pub const HEADER: &str = "icprl-scene v1";

fn pair(v: Vec2) -> String {
    format!("{},{}", v.x, v.y)
}

pub fn write_scene(scene: &Scene, task_id: Option<&str>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{HEADER}");
    if let Some(id) = task_id {
        let _ = writeln!(s, "task {id}");
    }
    let _ = writeln!(s, "env {}", scene.env);
    let _ = writeln!(s, "gravity {} {}", scene.gravity.x, scene.gravity.y);
    let _ = writeln!(s, "restitution {}", scene.restitution);
    let b = scene.bounds;
    let _ = writeln!(s, "bounds {} {} {} {}", b.min.x, b.min.y, b.max.x, b.max.y);
    if let Some(a) = scene.abyss_y {
        let _ = writeln!(s, "abyss {a}");
    }
    let _ = writeln!(s, "time {}", scene.time);
    if scene.target_touched {
        let _ = writeln!(s, "touched 1");
    }
    for body in &scene.bodies {
        let remove_at = body
            .remove_at
            .map_or_else(|| "-".to_string(), |t| t.to_string());
        let common = format!(
            "{} removable={} active={} remove-at={}",
            body.role.name(),
            body.removable as u8,
            body.active as u8,
            remove_at
        );
        match body.shape {
            Shape::Circle { radius } => {
                let _ = writeln!(
                    s,
                    "body {} circle {common} r={radius} pos={} vel={}",
                    body.id,
                    pair(body.position),
                    pair(body.velocity)
                );
            }
            Shape::Segment { a, b } => {
                let _ = writeln!(
                    s,
                    "body {} segment {common} a={} b={}",
                    body.id,
                    pair(a),
                    pair(b)
                );
            }
        }
    }
    s
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn num(line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| err(line, format!("bad number `{s}`")))
}

fn vec2(line: usize, s: &str) -> Result<Vec2> {
    let (x, y) = s
        .split_once(',')
        .ok_or_else(|| err(line, format!("expected x,y but got `{s}`")))?;
    Ok(Vec2::new(num(line, x)?, num(line, y)?))
}

fn flag(line: usize, s: &str) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(err(line, format!("expected 0 or 1, got `{s}`"))),
    }
}

fn parse_body(line: usize, fields: &[&str]) -> Result<Body> {
    if fields.len() < 3 {
        return Err(err(line, "truncated body line"));
    }
    let id: u32 = fields[0].parse().map_err(|_| err(line, "bad body id"))?;
    let kind = fields[1];
    let role =
        Role::parse(fields[2]).ok_or_else(|| err(line, format!("unknown role `{}`", fields[2])))?;
    let mut kv = std::collections::BTreeMap::new();
    for f in &fields[3..] {
        let (k, v) = f
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected key=value, got `{f}`")))?;
        kv.insert(k, v);
    }
    let get = |k: &str| {
        kv.get(k)
            .copied()
            .ok_or_else(|| err(line, format!("missing `{k}`")))
    };
    let mut body = match kind {
        "circle" => {
            let mut b = Body::circle(id, role, vec2(line, get("pos")?)?, num(line, get("r")?)?);
            b.velocity = vec2(line, get("vel")?)?;
            b
        }
        "segment" => Body::segment(id, role, vec2(line, get("a")?)?, vec2(line, get("b")?)?),
        other => return Err(err(line, format!("unknown body kind `{other}`"))),
    };
    body.removable = flag(line, get("removable")?)?;
    body.active = flag(line, get("active")?)?;
    body.remove_at = match get("remove-at")? {
        "-" => None,
        t => Some(num(line, t)?),
    };
    Ok(body)
}

/// Parses a scene file; returns the optional task id alongside the scene.
pub fn parse_scene(text: &str) -> Result<(Option<String>, Scene)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()));
    let header = lines.by_ref().find(|(_, l)| !l.is_empty());
    match header {
        Some((_, HEADER)) => {}
        Some((n, other)) => return Err(err(n, format!("unsupported header `{other}`"))),
        None => return Err(err(0, "empty scene file")),
    }
    let mut task = None;
    let mut env = None;
    let mut gravity = super::scene::DEFAULT_GRAVITY;
    let mut restitution = super::scene::DEFAULT_RESTITUTION;
    let mut bounds = None;
    let mut abyss = None;
    let mut time = 0.0;
    let mut touched = false;
    let mut bodies = Vec::new();
    for (n, l) in lines {
        if l.is_empty() {
            continue;
        }
        let fields: Vec<&str> = l.split_whitespace().collect();
        let args = &fields[1..];
        let want = |k: usize| {
            if args.len() == k {
                Ok(())
            } else {
                Err(err(n, format!("`{}` takes {k} value(s)", fields[0])))
            }
        };
        match fields[0] {
            "task" => {
                want(1)?;
                task = Some(args[0].to_string());
            }
            "env" => {
                want(1)?;
                env = Some(
                    EnvKind::parse(args[0])
                        .ok_or_else(|| err(n, format!("unknown env `{}`", args[0])))?,
                );
            }
            "gravity" => {
                want(2)?;
                gravity = Vec2::new(num(n, args[0])?, num(n, args[1])?);
            }
            "restitution" => {
                want(1)?;
                restitution = num(n, args[0])?;
            }
            "bounds" => {
                want(4)?;
                bounds = Some(Bounds::new(
                    Vec2::new(num(n, args[0])?, num(n, args[1])?),
                    Vec2::new(num(n, args[2])?, num(n, args[3])?),
                ));
            }
            "abyss" => {
                want(1)?;
                abyss = Some(num(n, args[0])?);
            }
            "time" => {
                want(1)?;
                time = num(n, args[0])?;
            }
            "touched" => {
                want(1)?;
                touched = flag(n, args[0])?;
            }
            "body" => bodies.push(parse_body(n, args)?),
            other => return Err(err(n, format!("unknown directive `{other}`"))),
        }
    }
    let env = env.ok_or_else(|| err(0, "missing `env`"))?;
    let bounds = bounds.ok_or_else(|| err(0, "missing `bounds`"))?;
    let mut scene = Scene::new(env, bounds);
    scene.gravity = gravity;
    scene.restitution = restitution;
    scene.abyss_y = abyss;
    scene.time = time;
    scene.target_touched = touched;
    scene.bodies = bodies;
    scene.validate()?;
    Ok((task, scene))
}
