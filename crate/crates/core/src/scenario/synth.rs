//! Synthetic expert data: templated road layouts populated with agents driven
//! by noisy IDM car-following and pure-pursuit lane keeping.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Polyline, Pose2};
use crate::rng::rng_from;

use super::{
    collision_check, offroad_check, AgentState, AgentTrack, RoadGraph, Scenario, DEFAULT_HORIZON_STEPS,
    DEFAULT_INIT_STEP, DT,
};

const LANE_WIDTH: f64 = 3.7;
const MAX_ATTEMPTS: usize = 500;
const GOAL_RADIUS: f64 = 2.0;

const IDM_S0: f64 = 2.0;
const IDM_T: f64 = 1.5;
const IDM_A: f64 = 1.5;
const IDM_B: f64 = 2.0;
const ACCEL_NOISE: f64 = 0.3;
const LOOKAHEAD: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Template {
    Straight,
    Curve,
    Intersection,
}

impl Template {
    pub const ALL: [Template; 3] = [Template::Straight, Template::Curve, Template::Intersection];
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Template::Straight => "straight",
            Template::Curve => "curve",
            Template::Intersection => "intersection",
        })
    }
}

impl FromStr for Template {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight" => Ok(Template::Straight),
            "curve" => Ok(Template::Curve),
            "intersection" => Ok(Template::Intersection),
            other => Err(Error::InvalidArgument(format!("unknown template '{other}'"))),
        }
    }
}

/// A generated scenario together with the hidden per-agent desired speeds.
#[derive(Debug, Clone)]
pub struct SyntheticScenario {
    pub scenario: Scenario,
    pub desired_speeds: Vec<f64>,
}

struct Layout {
    road_graph: RoadGraph,
    lanes: Vec<Polyline>,
    spawn_range: (f64, f64),
}

fn arc_points(center: Point2, radius: f64, start: f64, span: f64, n: usize) -> Vec<Point2> {
    (0..=n)
        .map(|k| {
            let a = start + span * k as f64 / n as f64;
            Point2::new(center.x + radius * a.cos(), center.y + radius * a.sin())
        })
        .collect()
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point2> {
    vec![Point2::new(x0, y0), Point2::new(x1, y0), Point2::new(x1, y1), Point2::new(x0, y1)]
}

fn seg(a: (f64, f64), b: (f64, f64)) -> Vec<Point2> {
    vec![Point2::new(a.0, a.1), Point2::new(b.0, b.1)]
}

fn layout(template: Template) -> Result<Layout> {
    let half = 1.5 * LANE_WIDTH;
    let (centerlines, edges, drivable, spawn_range) = match template {
        Template::Straight => {
            let lanes = [-LANE_WIDTH, 0.0, LANE_WIDTH].iter().map(|&y| seg((0.0, y), (400.0, y))).collect();
            let edges = vec![seg((0.0, -half), (400.0, -half)), seg((0.0, half), (400.0, half))];
            (lanes, edges, vec![rect(0.0, -half, 400.0, half)], (10.0, 250.0))
        }
        Template::Curve => {
            let r0 = 150.0;
            let span = 400.0 / r0;
            let center = Point2::new(0.0, r0);
            let start = -FRAC_PI_2;
            let n = (span.to_degrees() / 2.0).ceil() as usize;
            let lanes = [r0 + 0.5 * LANE_WIDTH, r0 - 0.5 * LANE_WIDTH]
                .iter()
                .map(|&r| arc_points(center, r, start, span, n))
                .collect();
            let outer = arc_points(center, r0 + LANE_WIDTH, start, span, n);
            let inner = arc_points(center, r0 - LANE_WIDTH, start, span, n);
            let mut poly = outer.clone();
            poly.extend(inner.iter().rev().copied());
            (lanes, vec![outer, inner], vec![poly], (10.0, 240.0))
        }
        Template::Intersection => {
            let l = 150.0;
            let h = 0.5 * LANE_WIDTH;
            let w = LANE_WIDTH;
            let lanes =
                vec![seg((-l, -h), (l, -h)), seg((l, h), (-l, h)), seg((h, -l), (h, l)), seg((-h, l), (-h, -l))];
            let edges = vec![
                seg((-l, w), (-w, w)),
                seg((w, w), (l, w)),
                seg((-l, -w), (-w, -w)),
                seg((w, -w), (l, -w)),
                seg((w, -l), (w, -w)),
                seg((w, w), (w, l)),
                seg((-w, -l), (-w, -w)),
                seg((-w, w), (-w, l)),
            ];
            let drivable = vec![rect(-l, -w, l, w), rect(-w, -l, w, l)];
            (lanes, edges, drivable, (20.0, 150.0))
        }
    };
    let lanes = centerlines.iter().map(|p: &Vec<Point2>| Polyline::new(p.clone())).collect::<Result<Vec<_>>>()?;
    Ok(Layout {
        road_graph: RoadGraph { lane_centerlines: centerlines, road_edges: edges, drivable_areas: drivable },
        lanes,
        spawn_range,
    })
}

struct SimAgent {
    lane: usize,
    pose: Pose2,
    speed: f64,
    desired: f64,
    length: f64,
    width: f64,
}

fn idm_accel(v: f64, v0: f64, lead: Option<(f64, f64)>) -> f64 {
    let free = 1.0 - (v / v0).powi(4);
    match lead {
        None => IDM_A * free,
        Some((gap, dv)) => {
            let s_star = IDM_S0 + v * IDM_T + v * dv / (2.0 * (IDM_A * IDM_B).sqrt());
            let s_star = s_star.max(IDM_S0);
            IDM_A * (free - (s_star / gap.max(0.1)).powi(2))
        }
    }
}

fn roll_out(
    agents: &mut [SimAgent],
    lanes: &[Polyline],
    steps: usize,
    rng: &mut crate::rng::Rng,
) -> Vec<Vec<AgentState>> {
    let noise = Normal::new(0.0, ACCEL_NOISE).expect("valid normal");
    let snapshot = |agents: &[SimAgent]| -> Vec<AgentState> {
        agents
            .iter()
            .map(|a| AgentState { pose: a.pose, speed: a.speed, length: a.length, width: a.width, valid: true })
            .collect()
    };
    let mut frames = vec![snapshot(agents)];
    for _ in 0..steps {
        let projections: Vec<f64> = agents.iter().map(|a| lanes[a.lane].project(&a.pose.position()).s).collect();
        let mut accels = Vec::with_capacity(agents.len());
        for (i, a) in agents.iter().enumerate() {
            let lead = agents
                .iter()
                .enumerate()
                .filter(|(j, b)| *j != i && b.lane == a.lane && projections[*j] > projections[i])
                .min_by(|x, y| projections[x.0].partial_cmp(&projections[y.0]).unwrap())
                .map(|(j, b)| {
                    let gap = projections[j] - projections[i] - 0.5 * (a.length + b.length);
                    (gap, a.speed - b.speed)
                });
            let acc = idm_accel(a.speed, a.desired, lead) + noise.sample(rng);
            accels.push(acc.clamp(-6.0, 3.0));
        }
        for (a, acc) in agents.iter_mut().zip(accels) {
            let lane = &lanes[a.lane];
            let proj = lane.project(&a.pose.position());
            let (target, _) = lane.point_at(proj.s + LOOKAHEAD);
            let local = a.pose.to_local(&target);
            let ld = local.norm().max(1e-6);
            let curvature = 2.0 * local.y / (ld * ld);
            let v_new = (a.speed + acc * DT).max(0.0);
            let ds = 0.5 * (a.speed + v_new) * DT;
            let mid = a.pose.heading + 0.5 * curvature * ds;
            a.pose = Pose2::new(a.pose.x + ds * mid.cos(), a.pose.y + ds * mid.sin(), a.pose.heading + curvature * ds);
            a.speed = v_new;
        }
        frames.push(snapshot(agents));
    }
    frames
}

fn try_spawn(layout: &Layout, n_agents: usize, rng: &mut crate::rng::Rng) -> Option<Vec<SimAgent>> {
    let mut agents: Vec<SimAgent> = Vec::with_capacity(n_agents);
    for _ in 0..n_agents {
        let mut placed = false;
        for _ in 0..50 {
            let lane = rng.random_range(0..layout.lanes.len());
            let s = rng.random_range(layout.spawn_range.0..layout.spawn_range.1);
            let (p, heading) = layout.lanes[lane].point_at(s);
            let length = rng.random_range(4.2..5.2);
            let width = rng.random_range(1.8..2.1);
            let desired = rng.random_range(8.0..15.0);
            let speed = desired * rng.random_range(0.6..1.0);
            let candidate = SimAgent { lane, pose: Pose2::new(p.x, p.y, heading), speed, desired, length, width };
            let clear = agents.iter().all(|b| {
                let gap = b.pose.position().dist(&candidate.pose.position());
                if b.lane == lane {
                    gap > 15.0 + 0.5 * (b.length + length)
                } else {
                    gap > 0.5 * (b.length + length) + 2.0
                }
            });
            if clear {
                agents.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return None;
        }
    }
    Some(agents)
}

fn frames_clean(frames: &[Vec<AgentState>], rg: &RoadGraph) -> Result<bool> {
    for frame in frames {
        for (i, a) in frame.iter().enumerate() {
            if offroad_check(a, rg)? {
                return Ok(false);
            }
            for b in &frame[i + 1..] {
                if collision_check(a, b)? {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Generates a deterministic collision-free, on-road expert scenario.
pub fn generate_synthetic_scenario(template: Template, n_agents: usize, seed: u64) -> Result<Scenario> {
    generate_with_profile(template, n_agents, seed).map(|s| s.scenario)
}

pub fn generate_with_profile(template: Template, n_agents: usize, seed: u64) -> Result<SyntheticScenario> {
    if n_agents == 0 {
        return Err(Error::InvalidArgument("n_agents must be at least 1".into()));
    }
    let layout = layout(template)?;
    let mut rng = rng_from(seed);
    let steps = DEFAULT_INIT_STEP + DEFAULT_HORIZON_STEPS;
    for _ in 0..MAX_ATTEMPTS {
        let Some(mut agents) = try_spawn(&layout, n_agents, &mut rng) else {
            continue;
        };
        let desired_speeds = agents.iter().map(|a| a.desired).collect();
        let frames = roll_out(&mut agents, &layout.lanes, steps, &mut rng);
        if !frames_clean(&frames, &layout.road_graph)? {
            continue;
        }
        let tracks: Vec<AgentTrack> =
            (0..n_agents).map(|i| AgentTrack::from_states(frames.iter().map(|f| f[i]).collect())).collect();
        let goals = Scenario::default_goals(&tracks, GOAL_RADIUS);
        let scenario = Scenario {
            id: format!("{template}-{n_agents}-{seed}"),
            road_graph: layout.road_graph.clone(),
            tracks,
            goals,
            controlled: vec![true; n_agents],
            init_step: DEFAULT_INIT_STEP,
            horizon_steps: DEFAULT_HORIZON_STEPS,
        };
        scenario.validate()?;
        return Ok(SyntheticScenario { scenario, desired_speeds });
    }
    Err(Error::SpawnExhausted(MAX_ATTEMPTS))
}
