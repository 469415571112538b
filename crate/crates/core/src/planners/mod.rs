//! Rule-based ego planners and a PDM-style closed-loop score.

mod frenet;
mod idm;
mod pdm;
mod presets;

use crate::error::{Error, Result};
use crate::geometry::{Point2, Polyline, Pose2};
use crate::scenario::Scenario;

pub use frenet::{
    frenet_candidates, frenet_plan, max_brake_candidate, quartic_velocity, quintic, select_candidate, Candidate,
    FrenetParams, Poly,
};
pub use idm::{idm_accel, IdmParams, IdmPlanner, Leader};
pub use pdm::{pdm_score, PdmBreakdown, PdmWeights};
pub use presets::{frenet_presets, idm_presets, PlannerPreset, PresetFile};

/// Reference path for the ego: its logged positions, extended straight past
/// the last one so planners can drive beyond the log.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub line: Polyline,
}

const ROUTE_EXTENSION: f64 = 200.0;

impl Route {
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        Ok(Self { line: Polyline::new(points)? })
    }

    pub fn from_log(scenario: &Scenario, agent: usize) -> Result<Self> {
        let tr = scenario.tracks.get(agent).ok_or_else(|| Error::InvalidArgument(format!("no agent {agent}")))?;
        let mut pts: Vec<Point2> = Vec::new();
        let mut last: Option<Pose2> = None;
        for t in scenario.init_step..tr.len() {
            if !tr.is_valid(t) {
                continue;
            }
            let p = tr.states[t].pose;
            if pts.last().is_none_or(|q| q.dist(&p.position()) > 0.1) {
                pts.push(p.position());
            }
            last = Some(p);
        }
        let last = last.ok_or_else(|| Error::InvalidArgument(format!("agent {agent} has no valid states")))?;
        let dir = match pts.len() {
            0 | 1 => Point2::new(last.heading.cos(), last.heading.sin()),
            n => {
                let d = pts[n - 1].sub(&pts[n - 2]);
                d.scale(1.0 / d.norm())
            }
        };
        let end = *pts.last().expect("at least one point");
        pts.push(end.add(&dir.scale(ROUTE_EXTENSION)));
        Self::new(pts)
    }

    pub fn length(&self) -> f64 {
        self.line.length()
    }
}

#[cfg(test)]
mod tests;
