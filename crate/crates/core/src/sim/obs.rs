//! Ego-centric feature construction.
//!
//! Observations and reference contexts share one layout. Every feature is a
//! fixed linear scaling of a physical quantity clamped into `[-1, 1]`.

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Point2, Polyline};
use crate::scenario::RoadGraph;

use super::{PreparedScenario, WorldState};

pub const EGO_DIM: usize = 6;
pub const PARTNER_DIM: usize = 7;
pub const ROAD_DIM: usize = 6;

const POS_SCALE: f64 = 50.0;
const GOAL_SCALE: f64 = 150.0;
const SPEED_SCALE: f64 = 30.0;
const LENGTH_SCALE: f64 = 10.0;
const WIDTH_SCALE: f64 = 5.0;
/// Spacing of sampled road points along centerlines and edges.
pub const ROAD_POINT_SPACING: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadPoint {
    pub position: Point2,
    pub direction: f64,
    pub is_edge: bool,
}

pub(super) fn sample_road_points(rg: &RoadGraph) -> Result<Vec<RoadPoint>> {
    let mut out = Vec::new();
    let lines = rg.lane_centerlines.iter().map(|l| (l, false)).chain(rg.road_edges.iter().map(|l| (l, true)));
    for (line, is_edge) in lines {
        let pl = Polyline::new(line.clone())?;
        for (position, direction) in pl.resample(ROAD_POINT_SPACING) {
            out.push(RoadPoint { position, direction, is_edge });
        }
    }
    Ok(out)
}

/// Which entities a view may see and how many.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewConfig {
    pub max_partners: usize,
    pub max_road_points: usize,
    /// Visibility cutoff in meters; `None` sees everything.
    pub radius: Option<f64>,
    pub include_goal: bool,
}

impl ViewConfig {
    /// Decentralized local view: 8 partners and 64 road points within 50 m.
    pub const fn observation() -> Self {
        Self { max_partners: 8, max_road_points: 64, radius: Some(50.0), include_goal: true }
    }

    /// Privileged reference view: all agents, no cutoff, no goal.
    pub const fn context() -> Self {
        Self { max_partners: 32, max_road_points: 64, radius: None, include_goal: false }
    }
}

/// Fixed-size, zero-padded feature block.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub ego: [f64; EGO_DIM],
    pub partners: Vec<[f64; PARTNER_DIM]>,
    pub partner_mask: Vec<bool>,
    pub road: Vec<[f64; ROAD_DIM]>,
    pub road_mask: Vec<bool>,
}

impl FeatureSet {
    /// All features in a single vector, padding included.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.ego.to_vec();
        for (row, m) in self.partners.iter().zip(&self.partner_mask) {
            v.extend_from_slice(row);
            v.push(*m as u8 as f64);
        }
        for (row, m) in self.road.iter().zip(&self.road_mask) {
            v.extend_from_slice(row);
            v.push(*m as u8 as f64);
        }
        v
    }

    pub fn present_partners(&self) -> impl Iterator<Item = &[f64; PARTNER_DIM]> {
        self.partners.iter().zip(&self.partner_mask).filter(|(_, m)| **m).map(|(r, _)| r)
    }

    pub fn present_road(&self) -> impl Iterator<Item = &[f64; ROAD_DIM]> {
        self.road.iter().zip(&self.road_mask).filter(|(_, m)| **m).map(|(r, _)| r)
    }

    pub fn partner_count(&self) -> usize {
        self.partner_mask.iter().filter(|&&m| m).count()
    }

    /// Zeroes goal offset and goal flag in place.
    pub fn drop_goal(&mut self) {
        self.ego[1] = 0.0;
        self.ego[2] = 0.0;
        self.ego[3] = 0.0;
    }
}

/// Decentralized per-agent input of the policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub FeatureSet);

/// Privileged per-agent input of the reference model.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalContext(pub FeatureSet);

fn clamp1(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Distance key robust to last-bit noise from rigid transforms.
fn sort_key(d: f64) -> i64 {
    (d * 1e6).round() as i64
}

pub fn build_view(
    world: &WorldState,
    agent: usize,
    prepared: &PreparedScenario,
    cfg: &ViewConfig,
    goal_dropout: bool,
) -> Result<FeatureSet> {
    if agent >= world.num_agents() || !world.is_present(agent) {
        return Err(Error::InactiveAgent(agent));
    }
    let me = &world.agents[agent];
    let pose = me.pose;
    let in_range = |d: f64| cfg.radius.is_none_or(|r| d <= r);

    let mut ego = [0.0; EGO_DIM];
    ego[0] = clamp1(me.speed / SPEED_SCALE);
    if cfg.include_goal && !goal_dropout {
        let g = pose.to_local(&prepared.scenario.goals[agent].position);
        ego[1] = clamp1(g.x / GOAL_SCALE);
        ego[2] = clamp1(g.y / GOAL_SCALE);
        ego[3] = 1.0;
    }
    ego[4] = clamp1(me.length / LENGTH_SCALE);
    ego[5] = clamp1(me.width / WIDTH_SCALE);

    let mut near: Vec<(i64, usize, f64)> = (0..world.num_agents())
        .filter(|&j| j != agent && world.is_present(j))
        .map(|j| {
            let d = world.agents[j].pose.position().dist(&pose.position());
            (sort_key(d), j, d)
        })
        .filter(|&(_, _, d)| in_range(d))
        .collect();
    near.sort_unstable_by_key(|&(k, j, _)| (k, j));
    near.truncate(cfg.max_partners);
    let mut partners = vec![[0.0; PARTNER_DIM]; cfg.max_partners];
    let mut partner_mask = vec![false; cfg.max_partners];
    for (slot, &(_, j, _)) in near.iter().enumerate() {
        let o = &world.agents[j];
        let rel = pose.to_local(&o.pose.position());
        let dh = normalize_angle(o.pose.heading - pose.heading);
        partners[slot] = [
            clamp1(rel.x / POS_SCALE),
            clamp1(rel.y / POS_SCALE),
            dh.cos(),
            dh.sin(),
            clamp1(o.speed / SPEED_SCALE),
            clamp1(o.length / LENGTH_SCALE),
            clamp1(o.width / WIDTH_SCALE),
        ];
        partner_mask[slot] = true;
    }

    let mut pts: Vec<(i64, usize, f64)> = prepared
        .road_points
        .iter()
        .enumerate()
        .map(|(k, rp)| {
            let d = rp.position.dist(&pose.position());
            (sort_key(d), k, d)
        })
        .filter(|&(_, _, d)| in_range(d))
        .collect();
    let r = cfg.max_road_points;
    if pts.len() > r && r > 0 {
        pts.select_nth_unstable_by_key(r - 1, |&(k, i, _)| (k, i));
        pts.truncate(r);
    } else if r == 0 {
        pts.clear();
    }
    pts.sort_unstable_by_key(|&(k, i, _)| (k, i));
    let mut road = vec![[0.0; ROAD_DIM]; r];
    let mut road_mask = vec![false; r];
    for (slot, &(_, k, _)) in pts.iter().enumerate() {
        let rp = &prepared.road_points[k];
        let rel = pose.to_local(&rp.position);
        let dh = normalize_angle(rp.direction - pose.heading);
        road[slot] = [
            clamp1(rel.x / POS_SCALE),
            clamp1(rel.y / POS_SCALE),
            dh.cos(),
            dh.sin(),
            (!rp.is_edge) as u8 as f64,
            rp.is_edge as u8 as f64,
        ];
        road_mask[slot] = true;
    }
    Ok(FeatureSet { ego, partners, partner_mask, road, road_mask })
}

pub fn build_observation(
    world: &WorldState,
    agent: usize,
    prepared: &PreparedScenario,
    goal_dropout: bool,
) -> Result<Observation> {
    build_view(world, agent, prepared, &ViewConfig::observation(), goal_dropout).map(Observation)
}

pub fn build_global_context(world: &WorldState, agent: usize, prepared: &PreparedScenario) -> Result<GlobalContext> {
    build_view(world, agent, prepared, &ViewConfig::context(), true).map(GlobalContext)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;
    use crate::scenario::{generate_synthetic_scenario, AgentState, AgentTrack, GoalSpec, Scenario, Template};
    use crate::sim::{reset, SimConfig};
    use proptest::prelude::*;

    fn two_agent(gap: f64) -> std::sync::Arc<PreparedScenario> {
        let mk = |x: f64| {
            AgentTrack::from_states(vec![
                AgentState {
                    pose: Pose2::new(x, 0.0, 0.0),
                    speed: 0.0,
                    length: 4.0,
                    width: 2.0,
                    valid: true,
                };
                91
            ])
        };
        let s = Scenario {
            id: "pair".into(),
            road_graph: RoadGraph {
                lane_centerlines: vec![vec![Point2::new(0.0, 0.0), Point2::new(10.0, 0.0)]],
                road_edges: vec![],
                drivable_areas: vec![vec![
                    Point2::new(-10.0, -300.0),
                    Point2::new(300.0, -300.0),
                    Point2::new(300.0, 300.0),
                    Point2::new(-10.0, 300.0),
                ]],
            },
            tracks: vec![mk(0.0), mk(gap)],
            goals: vec![GoalSpec { position: Point2::new(20.0, 5.0), radius: 2.0 }; 2],
            controlled: vec![true, true],
            init_step: 10,
            horizon_steps: 80,
        };
        PreparedScenario::new(s).unwrap()
    }

    #[test]
    fn cutoff_is_inclusive() {
        for (gap, seen) in [(50.0, true), (50.01, false), (200.0, false)] {
            let p = two_agent(gap);
            let w = reset(&p, &SimConfig::default()).unwrap();
            let o = build_observation(&w, 0, &p, false).unwrap();
            assert_eq!(o.0.partner_mask[0], seen, "gap {gap}");
            let c = build_global_context(&w, 0, &p).unwrap();
            assert!(c.0.partner_mask[0]);
        }
    }

    #[test]
    fn goal_dropout_zeroes_goal() {
        let p = two_agent(10.0);
        let w = reset(&p, &SimConfig::default()).unwrap();
        let with = build_observation(&w, 0, &p, false).unwrap().0;
        assert_eq!(with.ego[3], 1.0);
        let without = build_observation(&w, 0, &p, true).unwrap().0;
        assert_eq!(&without.ego[1..4], &[0.0, 0.0, 0.0]);
        let mut hand = with.clone();
        hand.drop_goal();
        assert_eq!(hand, without);
        let ctx = build_global_context(&w, 0, &p).unwrap().0;
        assert_eq!(&ctx.ego[1..4], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn lone_agent_has_no_partners() {
        let s = generate_synthetic_scenario(Template::Straight, 1, 0).unwrap();
        let p = PreparedScenario::new(s).unwrap();
        let w = reset(&p, &SimConfig::default()).unwrap();
        assert!(build_observation(&w, 0, &p, false).unwrap().0.partner_mask.iter().all(|m| !m));
        assert!(build_global_context(&w, 0, &p).unwrap().0.partner_mask.iter().all(|m| !m));
    }

    #[test]
    fn features_are_bounded_and_fixed_size() {
        let s = generate_synthetic_scenario(Template::Intersection, 6, 3).unwrap();
        let p = PreparedScenario::new(s).unwrap();
        let w = reset(&p, &SimConfig::default()).unwrap();
        let len = build_observation(&w, 0, &p, false).unwrap().0.flatten().len();
        for i in 0..6 {
            let f = build_observation(&w, i, &p, false).unwrap().0.flatten();
            assert_eq!(f.len(), len);
            assert!(f.iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn views_are_invariant_to_rigid_motion(
            seed in 0u64..1000, tpl in 0usize..3, rot in -3.1..3.1f64,
            tx in -500.0..500.0f64, ty in -500.0..500.0f64,
        ) {
            let s = generate_synthetic_scenario(Template::ALL[tpl], 5, seed).unwrap();
            let moved = s.transformed(rot, tx, ty);
            let p = PreparedScenario::new(s).unwrap();
            let q = PreparedScenario::new(moved).unwrap();
            let cfg = SimConfig::default();
            let wa = reset(&p, &cfg).unwrap();
            let wb = reset(&q, &cfg).unwrap();
            for i in 0..5 {
                for (a, b) in [
                    (build_observation(&wa, i, &p, false).unwrap().0, build_observation(&wb, i, &q, false).unwrap().0),
                    (build_global_context(&wa, i, &p).unwrap().0, build_global_context(&wb, i, &q).unwrap().0),
                ] {
                    prop_assert_eq!(&a.partner_mask, &b.partner_mask);
                    prop_assert_eq!(&a.road_mask, &b.road_mask);
                    for (x, y) in a.flatten().iter().zip(b.flatten()) {
                        prop_assert!((x - y).abs() <= 1e-9, "{} vs {}", x, y);
                    }
                }
            }
        }

        #[test]
        fn context_sees_every_observed_partner(seed in 0u64..1000, tpl in 0usize..3) {
            let s = generate_synthetic_scenario(Template::ALL[tpl], 6, seed).unwrap();
            let p = PreparedScenario::new(s).unwrap();
            let w = reset(&p, &SimConfig::default()).unwrap();
            for i in 0..6 {
                let o = build_observation(&w, i, &p, false).unwrap().0;
                let c = build_global_context(&w, i, &p).unwrap().0;
                for row in o.present_partners() {
                    prop_assert!(c.present_partners().any(|r| r == row));
                }
            }
        }
    }
}
