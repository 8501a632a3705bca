use icprl::agent::EnvAction;
use icprl::sim::physics::{DT, STABILITY_WINDOW, V_EPS};
use icprl::sim::run::{frame_steps, run, FRAME_COUNT};
use icprl::sim::{
    apply_action, check_success, render_observation, simulate_until_stable, step, Body, Bounds,
    EnvKind, OverlayKind, Role, Scene, Vec2,
};
use icprl::Error;
use proptest::prelude::*;

fn room(env: EnvKind) -> Scene {
    let mut s = Scene::new(env, Bounds::new(Vec2::ZERO, Vec2::new(8.0, 8.0)));
    if env == EnvKind::TimedRemove {
        s.abyss_y = Some(1.0);
    }
    s
}

#[test]
fn free_fall_single_step() {
    let mut s = room(EnvKind::GridDrop);
    s.bodies
        .push(Body::circle(0, Role::GreenBall, Vec2::new(4.0, 4.0), 0.3));
    let next = step(&s, 0.01).unwrap();
    assert!((next.bodies[0].velocity.y - (-0.098)).abs() < 1e-12);
    assert_eq!(next.bodies[0].velocity.x, 0.0);
}

#[test]
fn step_rejects_bad_dt() {
    let s = room(EnvKind::GridDrop);
    assert!(step(&s, 0.0).is_err());
    assert!(step(&s, f64::NAN).is_err());
}

#[test]
fn divergence_is_reported() {
    let mut s = room(EnvKind::GridDrop);
    s.bodies.push(
        Body::circle(0, Role::GreenBall, Vec2::new(4.0, 4.0), 0.3)
            .with_velocity(Vec2::new(f64::NAN, 0.0)),
    );
    assert!(matches!(
        step(&s, 0.01),
        Err(Error::SimulationDiverged { body: 0, .. })
    ));
}

#[test]
fn resting_circle_stays_put() {
    let mut s = room(EnvKind::GridDrop);
    s.restitution = 0.0;
    s.bodies.push(Body::segment(
        0,
        Role::Static,
        Vec2::new(1.0, 2.0),
        Vec2::new(6.0, 2.0),
    ));
    s.bodies
        .push(Body::circle(1, Role::GreenBall, Vec2::new(3.0, 2.3), 0.3));
    let mut cur = s.clone();
    for _ in 0..100 {
        cur = step(&cur, DT).unwrap();
        assert!((cur.bodies[1].position - s.bodies[1].position).length() < V_EPS);
        assert!(cur.bodies[1].velocity.length() < V_EPS);
    }
}

#[test]
fn elastic_head_on_exchanges_velocities() {
    let mut s = room(EnvKind::GridDrop);
    s.gravity = Vec2::ZERO;
    s.restitution = 1.0;
    s.bodies.push(
        Body::circle(0, Role::GreenBall, Vec2::new(3.0, 4.0), 0.25)
            .with_velocity(Vec2::new(1.0, 0.0)),
    );
    s.bodies.push(
        Body::circle(1, Role::Agent, Vec2::new(5.0, 4.0), 0.25).with_velocity(Vec2::new(-1.0, 0.0)),
    );
    // Closed form for equal masses, e = 1: the velocities swap.
    let (va, vb) = (Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0));
    let mut cur = s;
    for _ in 0..150 {
        cur = step(&cur, DT).unwrap();
    }
    assert_eq!(cur.bodies[0].velocity, vb);
    assert_eq!(cur.bodies[1].velocity, va);
}

#[test]
fn static_scene_settles_at_stability_window() {
    let mut s = room(EnvKind::GridDrop);
    s.bodies.push(Body::segment(
        0,
        Role::Static,
        Vec2::new(1.0, 2.0),
        Vec2::new(6.0, 2.0),
    ));
    s.bodies
        .push(Body::circle(1, Role::GreenBall, Vec2::new(3.0, 2.3), 0.3));
    let r = run(&s, 2000, true).unwrap();
    assert!(r.stable);
    assert_eq!(r.steps, STABILITY_WINDOW);
    let frames = r.frames.unwrap();
    assert_eq!(frames.frames.len(), FRAME_COUNT);
    for f in &frames.frames {
        assert_eq!(
            f.observation.annotations,
            frames.frames[0].observation.annotations
        );
    }
}

#[test]
fn dropped_ball_comes_to_rest_on_floor() {
    let mut s = room(EnvKind::GridDrop);
    s.restitution = 0.0;
    let (h, r) = (3.0, 0.25);
    s.bodies
        .push(Body::circle(0, Role::GreenBall, Vec2::new(4.0, h + r), r));
    let (frames, terminal) = simulate_until_stable(&s, 2000).unwrap();
    assert!(frames.stable);
    let ball = &terminal.bodies[0];
    assert!((ball.position.y - r).abs() < 1e-6);
    assert!(ball.velocity.length() < V_EPS);
    // Analytic fall time plus the stability window bounds the span.
    let fall = (2.0 * h / 9.8_f64).sqrt();
    let expected = fall + STABILITY_WINDOW as f64 * DT;
    assert!(
        (frames.span - expected).abs() <= 3.0 * DT,
        "span {} vs {}",
        frames.span,
        expected
    );
    // Frame timestamps are uniform over the span.
    for (j, f) in frames.frames.iter().enumerate() {
        assert!((f.time - j as f64 * frames.span / 4.0).abs() <= DT);
    }
    // The middle frame is taken while the ball is still falling.
    assert!(frames.frames[1].bodies[0].position.y < h + r);
}

#[test]
fn step_cap_returns_five_unstable_frames() {
    let mut s = room(EnvKind::GridDrop);
    s.bodies
        .push(Body::circle(0, Role::GreenBall, Vec2::new(4.0, 6.0), 0.25));
    let (frames, _) = simulate_until_stable(&s, 5).unwrap();
    assert_eq!(frames.frames.len(), 5);
    assert!(!frames.stable);
    assert!(frames.frames.windows(2).all(|w| w[0].time <= w[1].time));
    assert!(simulate_until_stable(&s, 4).is_err());
}

#[test]
fn frame_steps_are_uniform() {
    for n in 5..500 {
        let steps = frame_steps(n);
        assert_eq!(steps[0], 0);
        assert_eq!(steps[4], n);
        for (j, &k) in steps.iter().enumerate() {
            assert!((k as f64 - j as f64 * n as f64 / 4.0).abs() <= 0.5);
        }
    }
}

#[test]
fn grid_place_corner_and_errors() {
    let mut s = room(EnvKind::GridDrop);
    s.bodies
        .push(Body::circle(0, Role::GreenBall, Vec2::new(4.0, 0.3), 0.3));
    let placed = apply_action(&s, &EnvAction::grid(1, 1).unwrap()).unwrap();
    let agent = placed.bodies.last().unwrap();
    assert_eq!(agent.role, Role::Agent);
    assert_eq!(agent.position, Vec2::new(0.5, 7.5));
    assert_eq!(agent.radius(), Some(1.0 / 16.0));
    let bad = EnvAction::GridPlace {
        cell: 65,
        radius: 1,
    };
    assert!(matches!(
        apply_action(&s, &bad),
        Err(Error::InvalidAction(_))
    ));
    let bad = EnvAction::GridPlace { cell: 3, radius: 9 };
    assert!(matches!(
        apply_action(&s, &bad),
        Err(Error::InvalidAction(_))
    ));
    assert!(apply_action(&s, &EnvAction::EventSeq(vec![])).is_err());
}

#[test]
fn timed_remove_actions() {
    let mut s = room(EnvKind::TimedRemove);
    s.bodies.push(
        Body::segment(0, Role::Removable, Vec2::new(2.0, 4.0), Vec2::new(5.0, 4.0))
            .with_removable(true),
    );
    s.bodies
        .push(Body::circle(1, Role::RedBall, Vec2::new(3.0, 4.3), 0.3));
    s.bodies.push(Body::segment(
        2,
        Role::Static,
        Vec2::new(6.0, 3.0),
        Vec2::new(7.0, 3.0),
    ));

    let passive = apply_action(&s, &EnvAction::EventSeq(vec![])).unwrap();
    assert_eq!(passive, s);
    let (_, end) = simulate_until_stable(&passive, 2000).unwrap();
    assert!(
        !check_success(&end),
        "ball resting on a never-removed block"
    );

    let a = EnvAction::events_from_seconds(&[(0, 1.0)]).unwrap();
    let scheduled = apply_action(&s, &a).unwrap();
    assert_eq!(scheduled.bodies[0].remove_at, Some(1.0));
    let (frames, end) = simulate_until_stable(&scheduled, 2000).unwrap();
    assert!(!end.bodies[0].active);
    assert!(check_success(&end));
    assert!(frames.span > 1.0);

    let unknown = EnvAction::events_from_seconds(&[(9, 1.0)]).unwrap();
    assert!(matches!(
        apply_action(&s, &unknown),
        Err(Error::InvalidAction(_))
    ));
    let fixed = EnvAction::events_from_seconds(&[(2, 1.0)]).unwrap();
    assert!(matches!(
        apply_action(&s, &fixed),
        Err(Error::InvalidAction(_))
    ));
    assert!(EnvAction::events_from_seconds(&[(0, -1.0)]).is_err());
}

#[test]
fn green_ball_starting_on_target_succeeds() {
    let mut s = room(EnvKind::GridDrop);
    s.bodies.push(Body::segment(
        0,
        Role::Target,
        Vec2::new(1.0, 0.05),
        Vec2::new(3.0, 0.05),
    ));
    s.bodies
        .push(Body::circle(1, Role::GreenBall, Vec2::new(2.0, 0.35), 0.3));
    let with_agent = apply_action(&s, &EnvAction::grid(8, 1).unwrap()).unwrap();
    let (_, end) = simulate_until_stable(&with_agent, 2000).unwrap();
    assert!(check_success(&end));
}

/// Green ball on a ledge, basket to the right. The winning placement was
/// found by enumerating all 512 actions once and is frozen here.
fn knock_scene() -> Scene {
    let mut s = room(EnvKind::GridDrop);
    s.bodies.push(Body::segment(
        0,
        Role::Static,
        Vec2::new(1.0, 3.0),
        Vec2::new(3.5, 3.0),
    ));
    s.bodies
        .push(Body::circle(1, Role::GreenBall, Vec2::new(3.0, 3.35), 0.35));
    s.bodies.push(Body::segment(
        2,
        Role::Target,
        Vec2::new(4.6, 0.05),
        Vec2::new(5.9, 0.05),
    ));
    s.bodies.push(Body::segment(
        3,
        Role::Static,
        Vec2::new(4.6, 0.0),
        Vec2::new(4.6, 0.7),
    ));
    s.bodies.push(Body::segment(
        4,
        Role::Static,
        Vec2::new(5.9, 0.0),
        Vec2::new(5.9, 0.7),
    ));
    s
}

#[test]
fn knock_into_target_golden() {
    let s = knock_scene();
    let winners: Vec<EnvAction> = EnvAction::all_grid()
        .into_iter()
        .filter(|a| matches!(icprl::sim::execute(&s, a, false), Ok((true, _))))
        .collect();
    assert_eq!(
        winners,
        GOLDEN_KNOCK_WINNERS
            .iter()
            .map(|&(c, r)| EnvAction::grid(c, r).unwrap())
            .collect::<Vec<_>>()
    );
    let (c, r) = GOLDEN_KNOCK_WINNERS[0];
    let start = apply_action(&s, &EnvAction::grid(c, r).unwrap()).unwrap();
    let (_, end) = simulate_until_stable(&start, 2000).unwrap();
    assert!(check_success(&end));
    let miss = apply_action(&s, &EnvAction::grid(57, 1).unwrap()).unwrap();
    let (_, end) = simulate_until_stable(&miss, 2000).unwrap();
    assert!(!check_success(&end));
}

const GOLDEN_KNOCK_WINNERS: &[(u8, u8)] = &[
    (3, 4),
    (3, 5),
    (3, 6),
    (11, 4),
    (11, 5),
    (11, 6),
    (11, 7),
    (19, 5),
    (19, 6),
    (19, 7),
    (19, 8),
    (27, 7),
    (27, 8),
];

#[test]
fn render_empty_and_single_block() {
    let s = room(EnvKind::TimedRemove);
    let o = render_observation(&s);
    assert!(o.raw_grid.iter().all(|&c| c == 0));
    assert!(o.annotations.is_empty());
    assert_eq!(o.overlay, OverlayKind::IndexIds);

    let mut s = room(EnvKind::TimedRemove);
    s.bodies.push(
        Body::segment(3, Role::Removable, Vec2::new(2.0, 4.2), Vec2::new(5.0, 4.2))
            .with_removable(true),
    );
    let o = render_observation(&s);
    assert_eq!(o.annotations.len(), 1);
    assert_eq!(
        (o.annotations[0].id, o.annotations[0].role),
        (3, Role::Removable)
    );
    assert_eq!(o.annotations[0].cell, 28);
    assert_eq!(o, render_observation(&s));

    let g = render_observation(&knock_scene());
    assert_eq!(g.overlay, OverlayKind::Grid8x8);
    assert_eq!(
        g.features.len(),
        icprl::sim::render::feature_dim(EnvKind::GridDrop)
    );
    assert_eq!(
        o.features.len(),
        icprl::sim::render::feature_dim(EnvKind::TimedRemove)
    );
}

fn arb_scene() -> impl Strategy<Value = Scene> {
    (
        0.0..=1.0f64,
        prop::collection::vec(
            (
                0.4..7.6f64,
                0.4..7.6f64,
                0.1..0.4f64,
                -3.0..3.0f64,
                -3.0..3.0f64,
            ),
            1..6,
        ),
        prop::collection::vec((0.5..7.5f64, 0.5..7.5f64, 0.5..7.5f64, 0.5..7.5f64), 0..3),
    )
        .prop_map(|(e, circles, segs)| {
            let mut s = room(EnvKind::GridDrop);
            s.restitution = e;
            let mut id = 0;
            for (ax, ay, bx, by) in segs {
                if (ax - bx).abs() + (ay - by).abs() > 0.1 {
                    s.bodies.push(Body::segment(
                        id,
                        Role::Static,
                        Vec2::new(ax, ay),
                        Vec2::new(bx, by),
                    ));
                    id += 1;
                }
            }
            for (x, y, r, vx, vy) in circles {
                let c = Vec2::new(x, y);
                let clear = s.bodies.iter().all(|b| match b.shape {
                    icprl::sim::Shape::Circle { radius } => {
                        (b.position - c).length() > radius + r + 0.01
                    }
                    icprl::sim::Shape::Segment { a, b: e } => {
                        (c - icprl::sim::geom::closest_on_segment(c, a, e)).length() > r + 0.01
                    }
                }) && x - r > 0.0
                    && x + r < 8.0
                    && y - r > 0.0
                    && y + r < 8.0;
                if clear {
                    s.bodies
                        .push(Body::circle(id, Role::Agent, c, r).with_velocity(Vec2::new(vx, vy)));
                    id += 1;
                }
            }
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_never_increases(scene in arb_scene()) {
        let mut cur = scene;
        for _ in 0..400 {
            let next = step(&cur, DT).unwrap();
            let (e0, e1) = (cur.energy(), next.energy());
            prop_assert!(e1 <= e0 + 1e-6 * e0.abs().max(1e-12), "energy rose {} -> {} at t={}", e0, e1, cur.time);
            cur = next;
        }
    }

    #[test]
    fn bodies_stay_within_bounds(scene in arb_scene()) {
        let r = run(&scene, 600, false).unwrap();
        for b in &r.terminal.bodies {
            if let Some(rad) = b.radius() {
                prop_assert!(b.position.x >= -rad && b.position.x <= 8.0 + rad);
                prop_assert!(b.position.y >= -rad && b.position.y <= 8.0 + rad);
            }
        }
    }

    #[test]
    fn simulation_is_deterministic(scene in arb_scene()) {
        let a = run(&scene, 300, true).unwrap();
        let b = run(&scene, 300, true).unwrap();
        prop_assert_eq!(a.frames, b.frames);
        prop_assert_eq!(a.terminal, b.terminal);
    }
}
