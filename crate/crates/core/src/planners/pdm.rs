use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Obb, Pose2};
use crate::scenario::{Scenario, DT};
use crate::sim::SubstepRecord;

use super::Route;

/// Soft-term weights and thresholds of the closed-loop planning score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdmWeights {
    pub progress: f64,
    pub time_to_collision: f64,
    pub comfort: f64,
    pub ttc_threshold: f64,
    pub max_accel: f64,
    pub max_jerk: f64,
}

impl Default for PdmWeights {
    fn default() -> Self {
        Self { progress: 5.0, time_to_collision: 5.0, comfort: 2.0, ttc_threshold: 1.5, max_accel: 4.0, max_jerk: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdmBreakdown {
    pub no_collision: bool,
    pub drivable: bool,
    pub progress: f64,
    pub ttc: f64,
    pub comfort: f64,
    pub score: f64,
}

fn cv_pose(p: &Pose2, v: f64, t: f64) -> Pose2 {
    Pose2::new(p.x + v * p.heading.cos() * t, p.y + v * p.heading.sin() * t, p.heading)
}

/// True when constant-velocity extrapolation predicts contact within the threshold.
fn ttc_violated(rec: &SubstepRecord, ego: usize, threshold: f64) -> bool {
    let me = &rec.agents[ego];
    let n = (threshold / DT).round() as usize;
    (1..=n).any(|k| {
        let t = k as f64 * DT;
        let mine = Obb::new(&cv_pose(&me.pose, me.speed, t), me.length, me.width);
        rec.agents
            .iter()
            .enumerate()
            .filter(|(j, a)| *j != ego && a.valid)
            .any(|(_, a)| mine.overlaps(&Obb::new(&cv_pose(&a.pose, a.speed, t), a.length, a.width)))
    })
}

/// Scores an ego rollout: hard gates on collision and drivable area times a
/// weighted mean of progress, time-to-collision and comfort.
///
/// `records[0]` is the initial state; scoring covers the following steps.
pub fn pdm_score(records: &[SubstepRecord], ego: usize, scenario: &Scenario, w: &PdmWeights) -> Result<PdmBreakdown> {
    if records.len() < 2 {
        return Err(Error::InvalidArgument("ego rollout needs at least one simulated step".into()));
    }
    let steps = &records[1..];
    if steps.iter().any(|r| !r.agents[ego].valid) {
        return Err(Error::InvalidArgument("ego is missing from its rollout".into()));
    }
    let no_collision = !steps.iter().any(|r| r.collided[ego]);
    let drivable = !steps.iter().any(|r| r.offroad[ego]);

    let route = Route::from_log(scenario, ego)?;
    let s_of = |p: &Pose2| route.line.project(&p.position()).s;
    let start = s_of(&records[0].agents[ego].pose);
    let travelled = s_of(&steps[steps.len() - 1].agents[ego].pose) - start;
    let last_step = steps[steps.len() - 1].step;
    let track = &scenario.tracks[ego];
    let logged_end = (records[0].step..=last_step.min(track.len() - 1))
        .rev()
        .find(|&t| track.is_valid(t))
        .map(|t| s_of(&track.states[t].pose))
        .unwrap_or(start);
    let logged = logged_end - start;
    let progress = if logged > 1e-6 { (travelled / logged).clamp(0.0, 1.0) } else { 1.0 };

    let ttc = steps.iter().filter(|r| !ttc_violated(r, ego, w.ttc_threshold)).count() as f64 / steps.len() as f64;

    let speeds: Vec<f64> = steps.iter().map(|r| r.agents[ego].speed).collect();
    let comfortable = (0..speeds.len())
        .filter(|&i| {
            let acc = |i: usize| (speeds[i] - speeds[i - 1]) / DT;
            let a_ok = i < 1 || acc(i).abs() <= w.max_accel;
            let j_ok = i < 2 || ((acc(i) - acc(i - 1)) / DT).abs() <= w.max_jerk;
            a_ok && j_ok
        })
        .count() as f64
        / speeds.len() as f64;

    let soft = (w.progress * progress + w.time_to_collision * ttc + w.comfort * comfortable)
        / (w.progress + w.time_to_collision + w.comfort);
    let gate = (no_collision && drivable) as u8 as f64;
    Ok(PdmBreakdown { no_collision, drivable, progress, ttc, comfort: comfortable, score: gate * soft })
}
