use proptest::prelude::*;
use rand::Rng as _;

use super::*;
use crate::geometry::{Point2, Pose2};
use crate::metrics::log_rollout;
use crate::rng::rng_from;
use crate::scenario::{generate_synthetic_scenario, Template};
use crate::sim::{reset, PreparedScenario, SimConfig, WorldState};
use crate::tokenizer::{collect_segments, fit_kdisk_target_k};

#[test]
fn free_road_equilibrium_is_exact() {
    for v0 in [5.0, 13.7, 30.0, 41.3] {
        assert_eq!(idm_accel(v0, v0, 2.0, 3.0, 2.0, 1.5, 4.0, None), 0.0);
    }
    assert_eq!(idm_accel(0.0, 30.0, 2.0, 3.0, 2.0, 1.5, 4.0, None), 2.0);
}

#[test]
fn leader_at_desired_gap_brakes() {
    let mut rng = rng_from(1);
    for _ in 0..100 {
        let v: f64 = rng.random_range(0.5..35.0);
        let v0: f64 = rng.random_range(10.0..40.0);
        let a: f64 = rng.random_range(0.5..4.0);
        let b: f64 = rng.random_range(1.0..4.0);
        let s0: f64 = rng.random_range(1.0..4.0);
        let hw: f64 = rng.random_range(0.8..2.5);
        // Stationary leader: closing speed equals ego speed.
        let s_star = s0 + v * hw + v * v / (2.0 * (a * b).sqrt());
        let got = idm_accel(v, v0, a, b, s0, hw, 4.0, Some(Leader { gap: s_star, closing_speed: v }));
        let want = a * (1.0 - (v / v0).powi(4) - 1.0);
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0));
        assert!(got < 0.0);
    }
}

#[test]
fn idm_monotone_over_grids() {
    let lead_speed = 10.0;
    for gi in 1..40 {
        let gap = gi as f64 * 2.0;
        let mut prev = f64::INFINITY;
        for vi in 0..40 {
            let v = vi as f64;
            let a = idm_accel(v, 30.0, 2.0, 3.0, 2.0, 1.5, 4.0, Some(Leader { gap, closing_speed: v - lead_speed }));
            assert!(a < prev, "not decreasing in speed at gap {gap}, v {v}");
            prev = a;
        }
    }
    for vi in 0..40 {
        let v = vi as f64;
        let mut prev = f64::NEG_INFINITY;
        for gi in 1..60 {
            let gap = gi as f64;
            let a = idm_accel(v, 30.0, 2.0, 3.0, 2.0, 1.5, 4.0, Some(Leader { gap, closing_speed: v - lead_speed }));
            assert!(a > prev, "not increasing in gap at v {v}, gap {gap}");
            prev = a;
        }
    }
}

/// One agent on a straight road driving +x at `speed`, plus its route.
fn lone_car(speed: f64, y: f64) -> (WorldState, Route) {
    let p = PreparedScenario::new(generate_synthetic_scenario(Template::Straight, 2, 4).unwrap()).unwrap();
    let mut w = reset(&p, &SimConfig::default()).unwrap();
    w.agents[0].pose = Pose2::new(50.0, y, 0.0);
    w.agents[0].speed = speed;
    w.agents[1].valid = false;
    let route = Route::new(vec![Point2::new(0.0, 0.0), Point2::new(400.0, 0.0)]).unwrap();
    (w, route)
}

#[test]
fn idm_cruises_at_desired_speed() {
    let (w, route) = lone_car(30.0, 0.0);
    let mut pl = IdmPlanner::new(IdmParams::default()).unwrap();
    let out = pl.plan(&w, 0, &route, 2).unwrap();
    assert_eq!(out[0].1, 30.0);
    assert_eq!(out[1].1, 30.0);
    assert!((out[1].0.x - 56.0).abs() < 1e-9 && out[1].0.y.abs() < 1e-9);
}

#[test]
fn idm_steers_back_to_route() {
    let (w, route) = lone_car(10.0, 1.5);
    let mut pl = IdmPlanner::new(IdmParams::default()).unwrap();
    let out = pl.plan(&w, 0, &route, 2).unwrap();
    assert!(out[1].0.heading < 0.0);
}

#[test]
fn quintic_and_quartic_meet_boundaries() {
    let mut rng = rng_from(2);
    for _ in 0..200 {
        let s: [f64; 3] = [rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)];
        let e: [f64; 3] = [rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0), rng.random_range(-1.0..1.0)];
        let t = rng.random_range(0.5..4.0);
        let q = quintic(s, e, t);
        for k in 0..3 {
            assert!((q.eval(0.0, k) - s[k]).abs() < 1e-9);
            assert!((q.eval(t, k) - e[k]).abs() < 1e-9, "deriv {k}");
        }
        let v_end = rng.random_range(0.0..30.0);
        let q = quartic_velocity(s, v_end, 0.0, t);
        for k in 0..3 {
            assert!((q.eval(0.0, k) - s[k]).abs() < 1e-9);
        }
        assert!((q.eval(t, 1) - v_end).abs() < 1e-9);
        assert!(q.eval(t, 2).abs() < 1e-9);
    }
}

#[test]
fn poly_eval_matches_naive_sum() {
    let p = Poly(vec![1.0, -2.0, 0.5, 3.0]);
    let t: f64 = 1.7;
    assert!((p.eval(t, 0) - (1.0 - 2.0 * t + 0.5 * t * t + 3.0 * t.powi(3))).abs() < 1e-12);
    assert!((p.eval(t, 1) - (-2.0 + t + 9.0 * t * t)).abs() < 1e-12);
    assert!((p.eval(t, 2) - (1.0 + 18.0 * t)).abs() < 1e-12);
    assert_eq!(p.eval(t, 3), 18.0);
    assert_eq!(p.eval(t, 4), 0.0);
}

#[test]
fn frenet_steady_state_keeps_lane_and_speed() {
    let (w, route) = lone_car(30.0, 0.0);
    let p = FrenetParams::default();
    let cands = frenet_candidates(&w, 0, &route, &p).unwrap();
    assert_eq!(cands.len(), 15 * 7 * 5);
    let best = &cands[select_candidate(&cands, &p).unwrap()];
    assert!(best.d_end.abs() < 1e-9 && (best.v_end - 30.0).abs() < 1e-9);
    let plan = frenet_plan(&w, 0, &route, &p, 2).unwrap();
    assert!((plan[0].0.x - 53.0).abs() < 1e-6 && plan[0].0.y.abs() < 1e-6);
    assert!((plan[0].1 - 30.0).abs() < 1e-6);
}

#[test]
fn conservative_frenet_avoids_blocking_car() {
    let (mut w, route) = lone_car(20.0, 0.0);
    w.agents[1].valid = true;
    w.agents[1].pose = Pose2::new(75.0, 0.0, 0.0);
    w.agents[1].speed = 0.0;
    w.agents[1].length = 4.5;
    w.agents[1].width = 9.0;
    let p = frenet_presets().into_iter().find(|(n, _)| n == "Conservative").unwrap().1;
    assert_eq!(p.collision_penalty, 5000.0);
    let cands = frenet_candidates(&w, 0, &route, &p).unwrap();
    match select_candidate(&cands, &p) {
        Some(i) => assert!(!cands[i].collides),
        None => {
            let fb = max_brake_candidate(&w, 0, &p);
            let plan = frenet_plan(&w, 0, &route, &p, 2).unwrap();
            assert_eq!(plan, fb.states[..2].to_vec());
        }
    }
}

#[test]
fn raising_jerk_weight_never_picks_jerkier_candidate() {
    let (w, route) = lone_car(12.0, 0.8);
    let mut p = FrenetParams::default();
    let cands = frenet_candidates(&w, 0, &route, &p).unwrap();
    let mut prev = f64::INFINITY;
    for wj in [0.0, 0.1, 0.5, 1.0, 3.0, 10.0, 100.0] {
        p.w_jerk = wj;
        let j = cands[select_candidate(&cands, &p).unwrap()].jerk_sq;
        assert!(j <= prev + 1e-12);
        prev = j;
    }
}

#[test]
fn presets_reproduce_tables() {
    let f = frenet_presets();
    let names: Vec<&str> = f.iter().map(|x| x.0.as_str()).collect();
    assert_eq!(
        names,
        [
            "Baseline",
            "Aggressive",
            "Conservative",
            "Smooth Rider",
            "Lane Keeper",
            "Wide Search",
            "Fast Planner",
            "Long Horizon",
            "No Collision",
            "High Speed"
        ]
    );
    // (v_min, v_max, w_lateral, (d, v, t))
    let speed_lat_sampling = [
        (0.0, 30.0, 10.0, (15, 7, 5)),
        (0.0, 35.0, 5.0, (15, 7, 5)),
        (0.0, 20.0, 50.0, (15, 7, 5)),
        (0.0, 30.0, 20.0, (15, 7, 5)),
        (0.0, 30.0, 100.0, (15, 7, 5)),
        (0.0, 30.0, 10.0, (20, 10, 7)),
        (0.0, 30.0, 10.0, (5, 3, 2)),
        (0.0, 30.0, 10.0, (15, 7, 5)),
        (0.0, 30.0, 10.0, (15, 7, 5)),
        (5.0, 40.0, 10.0, (15, 7, 5)),
    ];
    for ((_, p), (lo, hi, wl, (d, v, t))) in f.iter().zip(speed_lat_sampling) {
        assert_eq!((p.v_min, p.v_max, p.w_lateral), (lo, hi, wl));
        assert_eq!((p.n_lateral, p.n_velocity, p.n_time), (d, v, t));
    }
    // Weight rows for the five detailed variants: (w_l, w_v, w_a, w_p, w_j).
    let weights = [
        (10.0, 1.0, 1.0, 1.0, 0.5),
        (5.0, 0.5, 1.0, 2.0, 0.5),
        (50.0, 1.0, 3.0, 1.0, 1.5),
        (20.0, 2.0, 5.0, 1.0, 3.0),
        (100.0, 1.0, 1.0, 1.0, 0.5),
    ];
    for ((_, p), w) in f.iter().zip(weights) {
        assert_eq!((p.w_lateral, p.w_velocity, p.w_acceleration, p.w_progress, p.w_jerk), w);
    }
    assert_eq!(f[2].1.collision_penalty, 5000.0);
    assert_eq!(f[4].1.lateral_span, 1.5);
    assert_eq!(f[7].1.horizon_steps, 40);
    assert_eq!(f[8].1.collision_penalty, 0.0);
    assert_eq!(f[9].1.velocity_span, 15.0);
    assert!(f.iter().all(|(_, p)| p.validate().is_ok()));

    let i = idm_presets();
    let rows = [
        ("IDM Baseline", 30.0, 2.0, 1.5, 0.5),
        ("IDM Conservative", 25.0, 3.0, 2.0, 0.2),
        ("IDM Aggressive", 35.0, 1.5, 1.0, 0.8),
        ("IDM Comfort", 28.0, 2.5, 1.8, 0.3),
        ("IDM Highway", 40.0, 3.0, 1.2, 0.6),
        ("IDM City", 15.0, 2.0, 1.5, 0.4),
        ("IDM Truck", 25.0, 4.0, 2.0, 0.3),
        ("IDM Emergency", 40.0, 1.5, 0.8, 0.9),
        ("IDM Adaptive", 30.0, 2.5, 1.5, 0.5),
        ("IDM Defensive", 25.0, 4.0, 2.5, 0.1),
    ];
    assert_eq!(i.len(), 10);
    for ((name, p), (n, v0, s0, t, ag)) in i.iter().zip(rows) {
        assert_eq!(name, n);
        assert_eq!((p.v0, p.s0, p.time_headway, p.aggressiveness), (v0, s0, t, ag));
        assert!(p.validate().is_ok());
    }
    let acc = |k: usize| (i[k].1.a_max, i[k].1.b_comf);
    assert_eq!([acc(0), acc(2), acc(1), acc(3)], [(2.0, 3.0), (3.0, 4.0), (1.5, 2.0), (1.5, 2.0)]);
    assert_eq!(i[1].1.safety_factor, 1.5);
    assert_eq!(i[2].1.safety_factor, 0.9);
    assert_eq!(i[3].1.max_jerk, Some(2.0));
    assert_eq!(i[4].1.perception_range, 100.0);
    assert_eq!(i[5].1.perception_range, 30.0);
    assert_eq!(i[6].1.vehicle_length, Some(8.0));
    assert_eq!(i[7].1.a_max, 4.0);
    assert_eq!(i[8].1.reaction_time, 0.2);
    assert_eq!(i[9].1.ttc_threshold, Some(3.0));
    assert!(i.iter().all(|(_, p)| p.delta == 4.0));
}

fn scored_log(seed: u64) -> (std::sync::Arc<PreparedScenario>, Vec<crate::sim::SubstepRecord>) {
    let p = PreparedScenario::new(generate_synthetic_scenario(Template::Curve, 3, seed).unwrap()).unwrap();
    let segs = collect_segments(p.scenario.tracks.iter(), 2);
    let v = fit_kdisk_target_k(&segs, 8, 1.0, 0).unwrap().vocab;
    let recs = log_rollout(&p, &v, &SimConfig::default()).unwrap();
    (p, recs)
}

#[test]
fn pdm_self_replay_structure() {
    let (p, recs) = scored_log(3);
    let w = PdmWeights::default();
    let b = pdm_score(&recs, 0, &p.scenario, &w).unwrap();
    assert!(b.no_collision && b.drivable);
    assert!((b.progress - 1.0).abs() < 1e-9);
    assert!((b.score - (5.0 * b.progress + 5.0 * b.ttc + 2.0 * b.comfort) / 12.0).abs() < 1e-12);
}

#[test]
fn pdm_collision_gate() {
    let (p, mut recs) = scored_log(4);
    recs[10].collided[0] = true;
    assert_eq!(pdm_score(&recs, 0, &p.scenario, &PdmWeights::default()).unwrap().score, 0.0);
    let (p, mut recs) = scored_log(4);
    recs[30].offroad[0] = true;
    assert_eq!(pdm_score(&recs, 0, &p.scenario, &PdmWeights::default()).unwrap().score, 0.0);
}

#[test]
fn pdm_stationary_ego_has_no_progress() {
    let (p, mut recs) = scored_log(5);
    let start = recs[0].agents[0];
    for r in &mut recs[1..] {
        r.agents[0].pose = start.pose;
        r.agents[0].speed = 0.0;
        r.collided[0] = false;
    }
    let b = pdm_score(&recs, 0, &p.scenario, &PdmWeights::default()).unwrap();
    assert_eq!(b.progress, 0.0);
    assert_eq!(b.comfort, 1.0);
    assert!((b.score - (5.0 * 0.0 + 5.0 * b.ttc + 2.0 * 1.0) / 12.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn pdm_score_is_bounded(seed in 0u64..40, shift in -3.0f64..3.0) {
        let (p, mut recs) = scored_log(seed);
        for r in &mut recs[1..] {
            r.agents[0].pose.y += shift;
            r.agents[0].speed *= 1.0 + 0.1 * shift;
        }
        let b = pdm_score(&recs, 0, &p.scenario, &PdmWeights::default()).unwrap();
        prop_assert!((0.0..=1.0).contains(&b.score));
        prop_assert!((0.0..=1.0).contains(&b.progress));
    }
}
