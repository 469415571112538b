//! Scenario data model: road graph, logged agent tracks, goals and control mask.

mod io;
mod predicates;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, polygon_is_simple, Point2, Pose2};

pub use io::{read_scenario, read_scenario_dir, write_scenario, SCENARIO_SCHEMA_VERSION};
pub use predicates::{collision_check, goal_check, offroad_check};
pub use synth::{generate_synthetic_scenario, generate_with_profile, SyntheticScenario, Template};

/// Simulation step length in seconds.
pub const DT: f64 = 0.1;
/// Steps of history before simulation starts (1 s).
pub const DEFAULT_INIT_STEP: usize = 10;
/// Simulated steps per episode (8 s).
pub const DEFAULT_HORIZON_STEPS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub pose: Pose2,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
    pub valid: bool,
}

impl AgentState {
    pub fn invalid() -> Self {
        Self { pose: Pose2::default(), speed: 0.0, length: 4.5, width: 2.0, valid: false }
    }

    fn check(&self) -> Result<()> {
        if !self.valid {
            return Ok(());
        }
        if !self.pose.is_finite() || !self.speed.is_finite() {
            return Err(Error::Invariant("valid agent state has non-finite fields".into()));
        }
        if normalize_angle(self.pose.heading) != self.pose.heading {
            return Err(Error::Invariant("heading not normalized".into()));
        }
        if self.speed < 0.0 {
            return Err(Error::Invariant("negative speed".into()));
        }
        if !(self.width > 0.0 && self.length >= self.width) {
            return Err(Error::Invariant(format!(
                "agent size {}x{} violates length >= width > 0",
                self.length, self.width
            )));
        }
        Ok(())
    }
}

/// Logged trajectory sampled at [`DT`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrack {
    pub states: Vec<AgentState>,
    pub validity: Vec<bool>,
}

impl AgentTrack {
    pub fn from_states(states: Vec<AgentState>) -> Self {
        let validity = states.iter().map(|s| s.valid).collect();
        Self { states, validity }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_valid(&self, t: usize) -> bool {
        self.validity.get(t).copied().unwrap_or(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadGraph {
    pub lane_centerlines: Vec<Vec<Point2>>,
    pub road_edges: Vec<Vec<Point2>>,
    pub drivable_areas: Vec<Vec<Point2>>,
}

impl RoadGraph {
    fn check(&self) -> Result<()> {
        for line in self.lane_centerlines.iter().chain(&self.road_edges) {
            if line.len() < 2 {
                return Err(Error::Invariant("polyline with fewer than 2 points".into()));
            }
            if line.iter().any(|p| !p.is_finite()) {
                return Err(Error::Invariant("non-finite road graph point".into()));
            }
        }
        for poly in &self.drivable_areas {
            if !polygon_is_simple(poly) {
                return Err(Error::Invariant("drivable polygon is not simple".into()));
            }
        }
        Ok(())
    }

    pub fn transformed(&self, rotation: f64, tx: f64, ty: f64) -> RoadGraph {
        let tf = |lines: &Vec<Vec<Point2>>| -> Vec<Vec<Point2>> {
            lines
                .iter()
                .map(|l| {
                    l.iter()
                        .map(|p| {
                            let q = crate::geometry::rotate_point(p, rotation);
                            Point2::new(q.x + tx, q.y + ty)
                        })
                        .collect()
                })
                .collect()
        };
        RoadGraph {
            lane_centerlines: tf(&self.lane_centerlines),
            road_edges: tf(&self.road_edges),
            drivable_areas: tf(&self.drivable_areas),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalSpec {
    pub position: Point2,
    pub radius: f64,
}

/// The unit of simulation and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub road_graph: RoadGraph,
    pub tracks: Vec<AgentTrack>,
    pub goals: Vec<GoalSpec>,
    pub controlled: Vec<bool>,
    pub init_step: usize,
    pub horizon_steps: usize,
}

impl Scenario {
    pub fn num_agents(&self) -> usize {
        self.tracks.len()
    }

    /// Number of logged states every track must carry.
    pub fn track_len(&self) -> usize {
        self.init_step + self.horizon_steps + 1
    }

    pub fn final_step(&self) -> usize {
        self.init_step + self.horizon_steps
    }

    pub fn controlled_ids(&self) -> Vec<usize> {
        (0..self.num_agents()).filter(|&i| self.controlled[i]).collect()
    }

    /// Builds default goals from each track's last valid position.
    pub fn default_goals(tracks: &[AgentTrack], radius: f64) -> Vec<GoalSpec> {
        tracks
            .iter()
            .map(|t| {
                let last = t.states.iter().rev().find(|s| s.valid).map(|s| s.pose.position()).unwrap_or_default();
                GoalSpec { position: last, radius }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon_steps == 0 {
            return Err(Error::Invariant("horizon_steps must be positive".into()));
        }
        let n = self.tracks.len();
        if self.goals.len() != n || self.controlled.len() != n {
            return Err(Error::Invariant(format!(
                "per-agent arrays disagree: {} tracks, {} goals, {} control flags",
                n,
                self.goals.len(),
                self.controlled.len()
            )));
        }
        self.road_graph.check()?;
        let expected = self.track_len();
        for (i, track) in self.tracks.iter().enumerate() {
            if track.states.len() != expected || track.validity.len() != expected {
                return Err(Error::Invariant(format!(
                    "track {i} has {} states, expected {expected}",
                    track.states.len()
                )));
            }
            for (s, v) in track.states.iter().zip(&track.validity) {
                if s.valid != *v {
                    return Err(Error::Invariant(format!("track {i} validity flags disagree")));
                }
                s.check()?;
            }
            if self.controlled[i] && !track.is_valid(self.init_step) {
                return Err(Error::Invariant(format!("controlled agent {i} has no valid initial state")));
            }
        }
        for g in &self.goals {
            if !(g.radius > 0.0) || !g.position.is_finite() {
                return Err(Error::Invariant("goal radius must be positive".into()));
            }
        }
        Ok(())
    }

    /// Applies one global rigid motion to every coordinate in the scenario.
    pub fn transformed(&self, rotation: f64, tx: f64, ty: f64) -> Scenario {
        let mut out = self.clone();
        out.road_graph = self.road_graph.transformed(rotation, tx, ty);
        for track in &mut out.tracks {
            for s in &mut track.states {
                if s.valid {
                    s.pose = s.pose.transformed(rotation, tx, ty);
                }
            }
        }
        for g in &mut out.goals {
            let p = crate::geometry::rotate_point(&g.position, rotation);
            g.position = Point2::new(p.x + tx, p.y + ty);
        }
        out
    }
}
