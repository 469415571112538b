//! Closed-loop world stepping.
//!
//! The simulator runs at 10 Hz while policies act at 5 Hz: one call to
//! [`step`] advances `policy_every` sub-steps. Token-driven agents follow the
//! per-step poses of their chosen token, planner-driven agents follow the
//! poses handed in by the planner, and log agents replay their tracks.

mod dump;
mod obs;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Obb, Pose2};
use crate::scenario::{goal_check, offroad_check, AgentState, Scenario, DT};
use crate::tokenizer::{token_poses, TokenId, TokenVocab};

pub use dump::{write_rollout_csv, DUMP_HEADER};
pub use obs::{
    build_global_context, build_observation, build_view, FeatureSet, GlobalContext, Observation, RoadPoint, ViewConfig,
    EGO_DIM, PARTNER_DIM, ROAD_DIM,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    pub policy_every: usize,
    pub horizon_steps: usize,
    pub remove_on_goal: bool,
    pub freeze_on_done: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: DT, policy_every: 2, horizon_steps: 80, remove_on_goal: false, freeze_on_done: true }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.policy_every == 0 {
            return Err(Error::Config("policy_every must be at least 1".into()));
        }
        if self.horizon_steps == 0 || !self.horizon_steps.is_multiple_of(self.policy_every) {
            return Err(Error::Config(format!(
                "horizon_steps {} must be a positive multiple of policy_every {}",
                self.horizon_steps, self.policy_every
            )));
        }
        if (self.dt - DT).abs() > 1e-12 {
            return Err(Error::Config(format!("dt is fixed at {DT} s")));
        }
        Ok(())
    }

    pub fn policy_steps(&self) -> usize {
        self.horizon_steps / self.policy_every
    }
}

/// How an agent is moved each sub-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlMode {
    Log,
    Token,
    Planner,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Token(TokenId),
    /// One `(pose, speed)` per sub-step.
    Trajectory(Vec<(Pose2, f64)>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounters {
    pub collisions: u32,
    pub offroad_steps: u32,
    pub goal_reached: bool,
}

/// Per-agent events aggregated over one policy step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgentEvents {
    pub collided: bool,
    pub offroad: bool,
    /// True only on the step where the goal is reached for the first time.
    pub goal_first: bool,
}

/// State and event flags after one simulator sub-step.
#[derive(Debug, Clone, PartialEq)]
pub struct SubstepRecord {
    pub step: usize,
    pub agents: Vec<AgentState>,
    pub collided: Vec<bool>,
    pub offroad: Vec<bool>,
    pub at_goal: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepEvents {
    pub agents: Vec<AgentEvents>,
    pub substeps: Vec<SubstepRecord>,
}

/// A scenario plus derived lookup data shared by every world that uses it.
#[derive(Debug, Clone)]
pub struct PreparedScenario {
    pub scenario: Scenario,
    pub road_points: Vec<RoadPoint>,
}

impl PreparedScenario {
    pub fn new(scenario: Scenario) -> Result<Arc<Self>> {
        scenario.validate()?;
        let road_points = obs::sample_road_points(&scenario.road_graph)?;
        Ok(Arc::new(Self { scenario, road_points }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    /// Absolute log index of the current state.
    pub step: usize,
    pub agents: Vec<AgentState>,
    pub modes: Vec<ControlMode>,
    pub done: Vec<bool>,
    pub removed: Vec<bool>,
    pub events: Vec<EventCounters>,
}

impl WorldState {
    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    /// Present in the scene: valid this step and not removed.
    pub fn is_present(&self, i: usize) -> bool {
        self.agents[i].valid && !self.removed[i]
    }

    /// Needs an action on the next policy step.
    pub fn needs_action(&self, i: usize) -> bool {
        self.modes[i] != ControlMode::Log && !self.done[i] && self.is_present(i)
    }

    pub fn acting_agents(&self) -> Vec<usize> {
        (0..self.num_agents()).filter(|&i| self.needs_action(i)).collect()
    }

    pub fn all_done(&self) -> bool {
        self.done.iter().all(|&d| d)
    }
}

/// Backward chord speed over `h` logged steps, matching what a token produces.
pub fn chord_speed(scenario: &Scenario, agent: usize, t: usize, h: usize) -> Option<f64> {
    let tr = &scenario.tracks[agent];
    if t < h || !tr.is_valid(t) || !tr.is_valid(t - h) {
        return None;
    }
    let a = tr.states[t - h].pose.position();
    let b = tr.states[t].pose.position();
    Some(a.dist(&b) / (h as f64 * DT))
}

/// Resets with token control for the scenario's controlled agents and log replay for the rest.
pub fn reset(prepared: &PreparedScenario, config: &SimConfig) -> Result<WorldState> {
    let modes =
        prepared.scenario.controlled.iter().map(|&c| if c { ControlMode::Token } else { ControlMode::Log }).collect();
    reset_with_modes(prepared, config, modes)
}

pub fn reset_with_modes(
    prepared: &PreparedScenario,
    config: &SimConfig,
    modes: Vec<ControlMode>,
) -> Result<WorldState> {
    config.validate()?;
    let s = &prepared.scenario;
    if modes.len() != s.num_agents() {
        return Err(Error::InvalidArgument(format!("{} control modes for {} agents", modes.len(), s.num_agents())));
    }
    if config.horizon_steps > s.horizon_steps {
        return Err(Error::Config(format!(
            "horizon {} exceeds scenario length {}",
            config.horizon_steps, s.horizon_steps
        )));
    }
    let t0 = s.init_step;
    let mut agents = Vec::with_capacity(s.num_agents());
    for (i, track) in s.tracks.iter().enumerate() {
        let mut st = track.states[t0];
        if modes[i] != ControlMode::Log {
            if !track.is_valid(t0) {
                return Err(Error::InvalidArgument(format!("agent {i} has no valid state at init_step")));
            }
            if let Some(v) = chord_speed(s, i, t0, config.policy_every) {
                st.speed = v;
            }
        }
        agents.push(st);
    }
    let n = agents.len();
    Ok(WorldState {
        step: t0,
        agents,
        modes,
        done: vec![false; n],
        removed: vec![false; n],
        events: vec![EventCounters::default(); n],
    })
}

fn final_step(prepared: &PreparedScenario, config: &SimConfig) -> usize {
    prepared.scenario.init_step + config.horizon_steps
}

/// Advances one policy step (`policy_every` sub-steps).
///
/// `actions[i]` must be `Some` exactly for agents that [`WorldState::needs_action`].
pub fn step(
    world: &mut WorldState,
    actions: &[Option<Action>],
    vocab: &TokenVocab,
    prepared: &PreparedScenario,
    config: &SimConfig,
) -> Result<StepEvents> {
    let s = &prepared.scenario;
    let n = world.num_agents();
    let p = config.policy_every;
    if actions.len() != n {
        return Err(Error::Action(format!("{} actions for {} agents", actions.len(), n)));
    }
    if !(world.step - s.init_step).is_multiple_of(p) {
        return Err(Error::Action(format!("step {} is not a policy boundary", world.step)));
    }
    if world.step >= final_step(prepared, config) {
        return Err(Error::Action("episode already finished".into()));
    }

    // Resolve every acting agent's sub-step poses before moving anyone.
    let mut planned: Vec<Option<Vec<(Pose2, f64)>>> = vec![None; n];
    for i in 0..n {
        match (&actions[i], world.needs_action(i)) {
            (None, false) => {}
            (Some(_), false) => {
                return Err(if world.done[i] {
                    Error::InactiveAgent(i)
                } else {
                    Error::Action(format!("agent {i} is not driven by actions"))
                })
            }
            (None, true) => return Err(Error::Action(format!("missing action for agent {i}"))),
            (Some(a), true) => {
                let start = world.agents[i].pose;
                let traj = match (a, world.modes[i]) {
                    (Action::Token(id), ControlMode::Token) => {
                        let tok = vocab.token(*id)?;
                        if tok.horizon() != p {
                            return Err(Error::Shape(format!(
                                "token horizon {} differs from policy_every {p}",
                                tok.horizon()
                            )));
                        }
                        let poses = token_poses(&start, tok);
                        let v = poses[p - 1].position().dist(&start.position()) / (p as f64 * DT);
                        poses.into_iter().map(|q| (q, v)).collect()
                    }
                    (Action::Trajectory(traj), ControlMode::Planner) => {
                        if traj.len() != p {
                            return Err(Error::Action(format!("planner gave {} poses, expected {p}", traj.len())));
                        }
                        if traj.iter().any(|(q, v)| !q.is_finite() || !v.is_finite() || *v < 0.0) {
                            return Err(Error::NonFinite("planner trajectory"));
                        }
                        traj.iter().map(|(q, v)| (Pose2::new(q.x, q.y, q.heading), *v)).collect()
                    }
                    _ => return Err(Error::Action(format!("action kind does not match control mode of agent {i}"))),
                };
                planned[i] = Some(traj);
            }
        }
    }

    let end = final_step(prepared, config);
    let mut agg = vec![AgentEvents::default(); n];
    let mut substeps = Vec::with_capacity(p);
    for k in 0..p {
        let t = world.step + 1;
        for i in 0..n {
            if world.removed[i] {
                continue;
            }
            if let Some(traj) = &planned[i] {
                let (pose, speed) = traj[k];
                let a = &mut world.agents[i];
                a.pose = pose;
                a.speed = speed;
            } else if world.done[i] {
                world.agents[i].speed = 0.0;
            } else if world.modes[i] == ControlMode::Log {
                world.agents[i] = s.tracks[i].states[t];
            }
        }
        world.step = t;
        let rec = detect_events(world, prepared, t)?;
        for i in 0..n {
            if rec.collided[i] {
                world.events[i].collisions += 1;
                agg[i].collided = true;
            }
            if rec.offroad[i] {
                world.events[i].offroad_steps += 1;
                agg[i].offroad = true;
            }
            if rec.at_goal[i] && !world.events[i].goal_reached {
                world.events[i].goal_reached = true;
                agg[i].goal_first = true;
                if config.remove_on_goal && world.modes[i] != ControlMode::Log {
                    world.done[i] = true;
                    if !config.freeze_on_done {
                        world.removed[i] = true;
                    }
                }
            }
        }
        substeps.push(rec);
    }
    if world.step >= end {
        world.done.iter_mut().for_each(|d| *d = true);
    }
    Ok(StepEvents { agents: agg, substeps })
}

fn detect_events(world: &WorldState, prepared: &PreparedScenario, t: usize) -> Result<SubstepRecord> {
    let n = world.num_agents();
    let s = &prepared.scenario;
    let present: Vec<bool> = (0..n).map(|i| world.is_present(i)).collect();
    let boxes: Vec<Option<Obb>> = (0..n)
        .map(|i| present[i].then(|| Obb::new(&world.agents[i].pose, world.agents[i].length, world.agents[i].width)))
        .collect();
    let mut collided = vec![false; n];
    for i in 0..n {
        let Some(bi) = &boxes[i] else { continue };
        if !world.agents[i].pose.is_finite() {
            return Err(Error::NonFinite("agent pose"));
        }
        for j in (i + 1)..n {
            if let Some(bj) = &boxes[j] {
                if bi.overlaps(bj) {
                    collided[i] = true;
                    collided[j] = true;
                }
            }
        }
    }
    let mut offroad = vec![false; n];
    let mut at_goal = vec![false; n];
    for i in 0..n {
        if present[i] {
            offroad[i] = offroad_check(&world.agents[i], &s.road_graph)?;
            at_goal[i] = goal_check(&world.agents[i], &s.goals[i]);
        }
    }
    let mut agents = world.agents.clone();
    for (a, p) in agents.iter_mut().zip(&present) {
        a.valid = *p;
    }
    Ok(SubstepRecord { step: t, agents, collided, offroad, at_goal })
}

/// Steps many independent worlds, optionally in parallel. Results do not
/// depend on the pool size.
pub fn step_batch(
    worlds: &mut [WorldState],
    actions: &[Vec<Option<Action>>],
    vocab: &TokenVocab,
    prepared: &[Arc<PreparedScenario>],
    config: &SimConfig,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Vec<StepEvents>> {
    if worlds.len() != actions.len() || worlds.len() != prepared.len() {
        return Err(Error::InvalidArgument("batch inputs have different lengths".into()));
    }
    let run = |worlds: &mut [WorldState]| -> Vec<Result<StepEvents>> {
        worlds
            .par_iter_mut()
            .zip(actions.par_iter())
            .zip(prepared.par_iter())
            .map(|((w, a), p)| step(w, a, vocab, p, config))
            .collect()
    };
    let results = match pool {
        Some(pool) => pool.install(|| run(worlds)),
        None => run(worlds),
    };
    results.into_iter().collect()
}

/// Thread pool with exactly `workers` threads.
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point2, RelPose};
    use crate::scenario::{generate_synthetic_scenario, AgentTrack, GoalSpec, RoadGraph, Template};
    use crate::tokenizer::MotionSegment;

    fn straight_vocab() -> TokenVocab {
        TokenVocab {
            tokens: vec![MotionSegment::zero(2), MotionSegment { rel_poses: vec![RelPose::new(1.0, 0.0, 0.0); 2] }],
            radius: 0.1,
            distance_lambda: 1.0,
        }
    }

    fn open_road() -> RoadGraph {
        RoadGraph {
            lane_centerlines: vec![vec![Point2::new(-100.0, 0.0), Point2::new(100.0, 0.0)]],
            road_edges: vec![],
            drivable_areas: vec![vec![
                Point2::new(-100.0, -10.0),
                Point2::new(100.0, -10.0),
                Point2::new(100.0, 10.0),
                Point2::new(-100.0, 10.0),
            ]],
        }
    }

    fn static_scenario(poses: &[Pose2]) -> Scenario {
        let tracks: Vec<AgentTrack> = poses
            .iter()
            .map(|p| {
                AgentTrack::from_states(vec![
                    AgentState { pose: *p, speed: 0.0, length: 4.0, width: 2.0, valid: true };
                    21
                ])
            })
            .collect();
        let n = tracks.len();
        Scenario {
            id: "test".into(),
            road_graph: open_road(),
            goals: vec![GoalSpec { position: Point2::new(500.0, 500.0), radius: 2.0 }; n],
            controlled: vec![true; n],
            tracks,
            init_step: 0,
            horizon_steps: 20,
        }
    }

    fn short_cfg() -> SimConfig {
        SimConfig { horizon_steps: 20, ..SimConfig::default() }
    }

    #[test]
    fn reset_is_deterministic() {
        let p = PreparedScenario::new(generate_synthetic_scenario(Template::Straight, 3, 4).unwrap()).unwrap();
        let a = reset(&p, &SimConfig::default()).unwrap();
        let b = reset(&p, &SimConfig::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.step, p.scenario.init_step);
        assert_eq!(a.acting_agents().len(), 3);
    }

    #[test]
    fn invalid_controlled_start_is_rejected() {
        let mut s = generate_synthetic_scenario(Template::Straight, 2, 4).unwrap();
        s.controlled[1] = false;
        s.tracks[1].states[s.init_step] = AgentState::invalid();
        s.tracks[1].validity[s.init_step] = false;
        let p = PreparedScenario::new(s).unwrap();
        let modes = vec![ControlMode::Token, ControlMode::Token];
        assert!(reset_with_modes(&p, &SimConfig::default(), modes).is_err());
    }

    #[test]
    fn log_replay_is_exact() {
        let mut s = generate_synthetic_scenario(Template::Intersection, 4, 2).unwrap();
        s.controlled = vec![false; 4];
        let p = PreparedScenario::new(s).unwrap();
        let cfg = SimConfig::default();
        let vocab = straight_vocab();
        let mut w = reset(&p, &cfg).unwrap();
        while !w.all_done() {
            let ev = step(&mut w, &vec![None; 4], &vocab, &p, &cfg).unwrap();
            for rec in &ev.substeps {
                for (i, a) in rec.agents.iter().enumerate() {
                    assert_eq!(*a, p.scenario.tracks[i].states[rec.step]);
                }
            }
        }
        assert_eq!(w.step, p.scenario.final_step());
    }

    #[test]
    fn zero_token_keeps_pose() {
        let p = PreparedScenario::new(static_scenario(&[Pose2::new(0.0, 0.0, 0.3)])).unwrap();
        let cfg = short_cfg();
        let mut w = reset(&p, &cfg).unwrap();
        for _ in 0..cfg.policy_steps() {
            let ev = step(&mut w, &[Some(Action::Token(TokenId(0)))], &straight_vocab(), &p, &cfg).unwrap();
            assert_eq!(ev.agents[0], AgentEvents::default());
            assert_eq!(w.agents[0].pose, Pose2::new(0.0, 0.0, 0.3));
        }
        assert!(w.all_done());
        assert!(step(&mut w, &[Some(Action::Token(TokenId(0)))], &straight_vocab(), &p, &cfg).is_err());
    }

    #[test]
    fn head_on_collision_matches_offline_sweep() {
        let a0 = Pose2::new(-15.0, 0.0, 0.0);
        let b0 = Pose2::new(15.0, 0.0, std::f64::consts::PI);
        let p = PreparedScenario::new(static_scenario(&[a0, b0])).unwrap();
        let cfg = short_cfg();
        let vocab = straight_vocab();
        let mut w = reset(&p, &cfg).unwrap();
        let mut first_sim = None;
        'outer: for _ in 0..cfg.policy_steps() {
            let acts = vec![Some(Action::Token(TokenId(1))); 2];
            let ev = step(&mut w, &acts, &vocab, &p, &cfg).unwrap();
            for rec in &ev.substeps {
                if rec.collided[0] {
                    first_sim = Some(rec.step);
                    break 'outer;
                }
            }
        }
        // Offline: both advance 1 m per sub-step toward each other.
        let mut first_offline = None;
        for t in 1..=20 {
            let pa = Pose2::new(-15.0 + t as f64, 0.0, 0.0);
            let pb = Pose2::new(15.0 - t as f64, 0.0, std::f64::consts::PI);
            if Obb::new(&pa, 4.0, 2.0).overlaps(&Obb::new(&pb, 4.0, 2.0)) {
                first_offline = Some(t);
                break;
            }
        }
        assert_eq!(first_sim, first_offline);
        assert_eq!(first_sim, Some(14));
    }

    #[test]
    fn missing_or_extra_actions_error() {
        let p = PreparedScenario::new(static_scenario(&[Pose2::new(0.0, 0.0, 0.0)])).unwrap();
        let cfg = short_cfg();
        let mut w = reset(&p, &cfg).unwrap();
        assert!(step(&mut w, &[None], &straight_vocab(), &p, &cfg).is_err());
        let bad = Action::Trajectory(vec![(Pose2::default(), 0.0); 2]);
        assert!(step(&mut w, &[Some(bad)], &straight_vocab(), &p, &cfg).is_err());
    }

    #[test]
    fn goal_fires_once_and_agent_stays_collidable() {
        let mut s = static_scenario(&[Pose2::new(0.0, 0.0, 0.0), Pose2::new(30.0, 0.0, 0.0)]);
        s.goals[0].position = Point2::new(4.0, 0.0);
        s.controlled[1] = false;
        let p = PreparedScenario::new(s).unwrap();
        let cfg = SimConfig { remove_on_goal: true, ..short_cfg() };
        let mut w = reset(&p, &cfg).unwrap();
        let mut firsts = 0;
        while !w.all_done() {
            let a = if w.needs_action(0) { Some(Action::Token(TokenId(1))) } else { None };
            let ev = step(&mut w, &[a, None], &straight_vocab(), &p, &cfg).unwrap();
            firsts += ev.agents[0].goal_first as usize;
        }
        assert_eq!(firsts, 1);
        assert!(w.is_present(0));
        assert!(w.events[0].goal_reached);
    }

    #[test]
    fn batch_results_ignore_worker_count() {
        let scen: Vec<_> = (0..4)
            .map(|k| PreparedScenario::new(generate_synthetic_scenario(Template::Curve, 3, k).unwrap()).unwrap())
            .collect();
        let cfg = SimConfig::default();
        let vocab = straight_vocab();
        let run = |pool: &rayon::ThreadPool| {
            let mut worlds: Vec<_> = scen.iter().map(|p| reset(p, &cfg).unwrap()).collect();
            let mut log = Vec::new();
            while !worlds[0].all_done() {
                let acts: Vec<Vec<Option<Action>>> = worlds
                    .iter()
                    .map(|w| (0..w.num_agents()).map(|i| Some(Action::Token(TokenId((w.step + i) % 2)))).collect())
                    .collect();
                step_batch(&mut worlds, &acts, &vocab, &scen, &cfg, Some(pool)).unwrap();
                log.push(worlds.clone());
            }
            log
        };
        assert_eq!(run(&worker_pool(1).unwrap()), run(&worker_pool(3).unwrap()));
    }
}
