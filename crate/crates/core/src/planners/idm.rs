use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Point2, Pose2};
use crate::scenario::DT;
use crate::sim::WorldState;

use super::Route;

/// Intelligent Driver Model parameters plus per-variant extras.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdmParams {
    pub v0: f64,
    pub s0: f64,
    pub time_headway: f64,
    pub a_max: f64,
    pub b_comf: f64,
    pub delta: f64,
    pub aggressiveness: f64,
    pub perception_range: f64,
    /// Multiplies the desired dynamic gap.
    pub safety_factor: f64,
    /// Limit on the change of acceleration, m/s³.
    pub max_jerk: Option<f64>,
    /// Ego length used for gap computation instead of the logged one.
    pub vehicle_length: Option<f64>,
    /// Perception delay in seconds; the leader is seen where it was this long ago.
    pub reaction_time: f64,
    /// Brake at least comfortably when time-to-collision with the leader drops below this.
    pub ttc_threshold: Option<f64>,
    /// Pure-pursuit lookahead distance.
    pub lookahead: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            v0: 30.0,
            s0: 2.0,
            time_headway: 1.5,
            a_max: 2.0,
            b_comf: 3.0,
            delta: 4.0,
            aggressiveness: 0.5,
            perception_range: 50.0,
            safety_factor: 1.0,
            max_jerk: None,
            vehicle_length: None,
            reaction_time: 0.0,
            ttc_threshold: None,
            lookahead: 5.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.v0,
            self.s0,
            self.time_headway,
            self.a_max,
            self.b_comf,
            self.delta,
            self.perception_range,
            self.safety_factor,
            self.lookahead,
        ];
        if pos.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Config("IDM parameters must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.aggressiveness) {
            return Err(Error::Config("aggressiveness must lie in [0, 1]".into()));
        }
        if self.reaction_time < 0.0
            || self.max_jerk.is_some_and(|j| j <= 0.0)
            || self.ttc_threshold.is_some_and(|t| t <= 0.0)
        {
            return Err(Error::Config("IDM extras must be positive".into()));
        }
        Ok(())
    }

    /// Acceleration ceiling after aggressiveness: half the tabled value at 0, the full value at 1.
    pub fn effective_a_max(&self) -> f64 {
        self.a_max * (0.5 + 0.5 * self.aggressiveness)
    }

    /// Headway after aggressiveness: 1.5x the tabled value at 0, the tabled value at 1.
    pub fn effective_headway(&self) -> f64 {
        self.time_headway * (1.5 - 0.5 * self.aggressiveness)
    }
}

/// Bumper-to-bumper gap to the leader and the closing speed (ego minus leader).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leader {
    pub gap: f64,
    pub closing_speed: f64,
}

/// IDM law. Without a leader the interaction term is dropped.
#[allow(clippy::too_many_arguments)]
pub fn idm_accel(
    v: f64,
    v0: f64,
    a_max: f64,
    b: f64,
    s0: f64,
    headway: f64,
    delta: f64,
    leader: Option<Leader>,
) -> f64 {
    let free = a_max * (1.0 - (v / v0).powf(delta));
    match leader {
        None => free,
        Some(l) => {
            // The dynamic part is floored at zero so a receding leader never shrinks the gap below s0.
            let s_star = s0 + (v * headway + v * l.closing_speed / (2.0 * (a_max * b).sqrt())).max(0.0);
            let gap = l.gap.max(1e-3);
            free - a_max * (s_star / gap).powi(2)
        }
    }
}

/// IDM longitudinal control with pure-pursuit steering along a route.
#[derive(Debug, Clone, PartialEq)]
pub struct IdmPlanner {
    pub params: IdmParams,
    last_accel: f64,
}

impl IdmPlanner {
    pub fn new(params: IdmParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, last_accel: 0.0 })
    }

    fn find_leader(
        &self,
        world: &WorldState,
        ego: usize,
        route: &Route,
        ego_pose: &Pose2,
        v_ego: f64,
        elapsed: f64,
    ) -> Option<Leader> {
        let me = &world.agents[ego];
        let proj = route.line.project(&ego_pose.position());
        let my_len = self.params.vehicle_length.unwrap_or(me.length);
        let mut best: Option<Leader> = None;
        for (j, o) in world.agents.iter().enumerate() {
            if j == ego || !world.is_present(j) {
                continue;
            }
            // Constant-velocity prediction, minus the perception delay.
            let dt = elapsed - self.params.reaction_time;
            let pos = o
                .pose
                .position()
                .add(&Point2::new(o.speed * o.pose.heading.cos() * dt, o.speed * o.pose.heading.sin() * dt));
            let pj = route.line.project(&pos);
            if pj.s <= proj.s || pj.d.abs() > 0.5 * (me.width + o.width) + 0.5 {
                continue;
            }
            let gap = pj.s - proj.s - 0.5 * (my_len + o.length);
            if gap > self.params.perception_range {
                continue;
            }
            let v_lead = o.speed * normalize_angle(o.pose.heading - pj.heading).cos();
            if best.is_none_or(|b| gap < b.gap) {
                best = Some(Leader { gap, closing_speed: v_ego - v_lead });
            }
        }
        best
    }

    /// Acceleration command for the current state.
    pub fn accel(&self, world: &WorldState, ego: usize, route: &Route, pose: &Pose2, v: f64, elapsed: f64) -> f64 {
        let p = &self.params;
        let a_eff = p.effective_a_max();
        let leader = self.find_leader(world, ego, route, pose, v, elapsed);
        let scaled = leader.map(|l| Leader { gap: l.gap / p.safety_factor, ..l });
        let mut a = idm_accel(v, p.v0, a_eff, p.b_comf, p.s0, p.effective_headway(), p.delta, scaled);
        if let (Some(l), Some(ttc)) = (leader, p.ttc_threshold) {
            if l.closing_speed > 0.0 && l.gap / l.closing_speed < ttc {
                a = a.min(-p.b_comf);
            }
        }
        a.clamp(-2.0 * p.b_comf, a_eff)
    }

    /// Next `n` sub-step poses and speeds.
    pub fn plan(&mut self, world: &WorldState, ego: usize, route: &Route, n: usize) -> Result<Vec<(Pose2, f64)>> {
        let mut pose = world.agents[ego].pose;
        let mut v = world.agents[ego].speed;
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut a = self.accel(world, ego, route, &pose, v, k as f64 * DT);
            if let Some(j) = self.params.max_jerk {
                a = a.clamp(self.last_accel - j * DT, self.last_accel + j * DT);
            }
            self.last_accel = a;
            let v_next = (v + a * DT).max(0.0);
            let kappa = pure_pursuit_curvature(route, &pose, self.params.lookahead);
            let heading = normalize_angle(pose.heading + v_next * kappa * DT);
            let mid = normalize_angle(pose.heading + 0.5 * v_next * kappa * DT);
            pose = Pose2::new(pose.x + v_next * mid.cos() * DT, pose.y + v_next * mid.sin() * DT, heading);
            v = v_next;
            out.push((pose, v));
        }
        Ok(out)
    }
}

/// Curvature steering the pose toward the route point `lookahead` ahead of its projection.
pub fn pure_pursuit_curvature(route: &Route, pose: &Pose2, lookahead: f64) -> f64 {
    let proj = route.line.project(&pose.position());
    let (target, _) = route.line.point_at(proj.s + lookahead);
    let local = pose.to_local(&target);
    let l2 = local.x * local.x + local.y * local.y;
    if l2 < 1e-9 {
        return 0.0;
    }
    2.0 * local.y / l2
}
