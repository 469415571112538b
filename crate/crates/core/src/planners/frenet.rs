use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Obb, Pose2};
use crate::scenario::DT;
use crate::sim::WorldState;

use super::Route;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrenetParams {
    pub w_lateral: f64,
    pub w_velocity: f64,
    pub w_acceleration: f64,
    pub w_progress: f64,
    pub w_jerk: f64,
    /// Added to the cost of any candidate predicted to collide; 0 disables the check.
    pub collision_penalty: f64,
    pub n_lateral: usize,
    pub n_velocity: usize,
    pub n_time: usize,
    /// Lateral targets span [-lateral_span, lateral_span].
    pub lateral_span: f64,
    /// Velocity targets span the current speed plus or minus this.
    pub velocity_span: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Evaluation horizon in 0.1 s steps; candidate durations split it evenly.
    pub horizon_steps: usize,
    /// Deceleration of the fallback candidate.
    pub max_brake: f64,
}

impl Default for FrenetParams {
    fn default() -> Self {
        Self {
            w_lateral: 10.0,
            w_velocity: 1.0,
            w_acceleration: 1.0,
            w_progress: 1.0,
            w_jerk: 0.5,
            collision_penalty: 1000.0,
            n_lateral: 15,
            n_velocity: 7,
            n_time: 5,
            lateral_span: 3.0,
            velocity_span: 10.0,
            v_min: 0.0,
            v_max: 30.0,
            horizon_steps: 30,
            max_brake: 8.0,
        }
    }
}

impl FrenetParams {
    pub fn validate(&self) -> Result<()> {
        let w = [
            self.w_lateral,
            self.w_velocity,
            self.w_acceleration,
            self.w_progress,
            self.w_jerk,
            self.collision_penalty,
            self.lateral_span,
            self.velocity_span,
            self.v_min,
        ];
        if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
            return Err(Error::Config("Frenet weights and spans must be non-negative".into()));
        }
        if self.n_lateral == 0 || self.n_velocity == 0 || self.n_time == 0 || self.horizon_steps == 0 {
            return Err(Error::Config("Frenet sample counts must be at least 1".into()));
        }
        if !(self.v_max > self.v_min) || !(self.max_brake > 0.0) {
            return Err(Error::Config("Frenet speed range or brake is invalid".into()));
        }
        Ok(())
    }

    pub fn desired_speed(&self) -> f64 {
        self.v_max
    }
}

/// Polynomial in time with coefficients in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn eval(&self, t: f64, deriv: usize) -> f64 {
        let mut acc = 0.0;
        for (i, &c) in self.0.iter().enumerate().skip(deriv).rev() {
            let mut f = 1.0;
            for k in 0..deriv {
                f *= (i - k) as f64;
            }
            acc = acc * t + c * f;
        }
        acc
    }
}

/// Quintic with position, velocity and acceleration fixed at 0 and `t_end`.
pub fn quintic(start: [f64; 3], end: [f64; 3], t_end: f64) -> Poly {
    let [x0, v0, a0] = start;
    let [x1, v1, a1] = end;
    let t = t_end;
    let c2 = 0.5 * a0;
    let d0 = x1 - (x0 + v0 * t + c2 * t * t);
    let d1 = v1 - (v0 + 2.0 * c2 * t);
    let d2 = a1 - 2.0 * c2;
    let c3 = (20.0 * d0 - 8.0 * d1 * t + d2 * t * t) / (2.0 * t.powi(3));
    let c4 = (-30.0 * d0 + 14.0 * d1 * t - 2.0 * d2 * t * t) / (2.0 * t.powi(4));
    let c5 = (12.0 * d0 - 6.0 * d1 * t + d2 * t * t) / (2.0 * t.powi(5));
    Poly(vec![x0, v0, c2, c3, c4, c5])
}

/// Quartic with start state fixed and end velocity and acceleration fixed.
pub fn quartic_velocity(start: [f64; 3], v_end: f64, a_end: f64, t_end: f64) -> Poly {
    let [x0, v0, a0] = start;
    let t = t_end;
    let c2 = 0.5 * a0;
    let e1 = v_end - v0 - 2.0 * c2 * t;
    let e2 = a_end - 2.0 * c2;
    let c3 = (3.0 * e1 - e2 * t) / (3.0 * t * t);
    let c4 = (e2 * t - 2.0 * e1) / (4.0 * t.powi(3));
    Poly(vec![x0, v0, c2, c3, c4])
}

/// One sampled trajectory and its cost terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub d_target: f64,
    pub v_target: f64,
    pub duration: f64,
    /// World poses and speeds at each 0.1 s step of the horizon.
    pub states: Vec<(Pose2, f64)>,
    pub d_end: f64,
    pub v_end: f64,
    pub accel_sq: f64,
    pub jerk_sq: f64,
    pub progress: f64,
    pub collides: bool,
}

impl Candidate {
    pub fn cost(&self, p: &FrenetParams) -> f64 {
        p.w_lateral * self.d_end.abs()
            + p.w_velocity * (self.v_end - p.desired_speed()).abs()
            + p.w_acceleration * self.accel_sq
            + p.w_jerk * self.jerk_sq
            - p.w_progress * self.progress
            + if self.collides { p.collision_penalty } else { 0.0 }
    }
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Constant-velocity boxes of every other present agent at each horizon step.
fn predicted_obstacles(world: &WorldState, ego: usize, steps: usize) -> Vec<Vec<Obb>> {
    (1..=steps)
        .map(|k| {
            let t = k as f64 * DT;
            (0..world.num_agents())
                .filter(|&j| j != ego && world.is_present(j))
                .map(|j| {
                    let a = &world.agents[j];
                    let p = Pose2::new(
                        a.pose.x + a.speed * a.pose.heading.cos() * t,
                        a.pose.y + a.speed * a.pose.heading.sin() * t,
                        a.pose.heading,
                    );
                    Obb::new(&p, a.length, a.width)
                })
                .collect()
        })
        .collect()
}

fn collides(states: &[(Pose2, f64)], obstacles: &[Vec<Obb>], length: f64, width: f64) -> bool {
    states.iter().zip(obstacles).any(|((p, _), obs)| {
        let me = Obb::new(p, length, width);
        obs.iter().any(|o| me.overlaps(o))
    })
}

/// Every candidate in sampling order: duration, then lateral target, then velocity target.
pub fn frenet_candidates(world: &WorldState, ego: usize, route: &Route, p: &FrenetParams) -> Result<Vec<Candidate>> {
    p.validate()?;
    let me = &world.agents[ego];
    let proj = route.line.project(&me.pose.position());
    if !proj.d.is_finite() {
        return Err(Error::InvalidArgument("ego cannot be projected onto its route".into()));
    }
    let rel = normalize_angle(me.pose.heading - proj.heading);
    let s_start = [proj.s, me.speed * rel.cos(), 0.0];
    let d_start = [proj.d, me.speed * rel.sin(), 0.0];
    let h = p.horizon_steps;
    let horizon = h as f64 * DT;
    let obstacles = if p.collision_penalty > 0.0 { predicted_obstacles(world, ego, h) } else { Vec::new() };
    let v_lo = (me.speed - p.velocity_span).max(p.v_min);
    let v_hi = (me.speed + p.velocity_span).min(p.v_max).max(v_lo);
    let mut out = Vec::with_capacity(p.n_time * p.n_lateral * p.n_velocity);
    for i in 0..p.n_time {
        let duration = horizon * (i + 1) as f64 / p.n_time as f64;
        for &d_target in &grid(-p.lateral_span, p.lateral_span, p.n_lateral) {
            let lat = quintic(d_start, [d_target, 0.0, 0.0], duration);
            for &v_target in &grid(v_lo, v_hi, p.n_velocity) {
                let lon = quartic_velocity(s_start, v_target, 0.0, duration);
                out.push(roll_out(
                    &lat, &lon, duration, d_target, v_target, route, h, me.length, me.width, &obstacles, proj.s,
                ));
            }
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn roll_out(
    lat: &Poly,
    lon: &Poly,
    duration: f64,
    d_target: f64,
    v_target: f64,
    route: &Route,
    h: usize,
    length: f64,
    width: f64,
    obstacles: &[Vec<Obb>],
    s0: f64,
) -> Candidate {
    let s_end_poly = lon.eval(duration, 0);
    let mut states = Vec::with_capacity(h);
    let mut accel_sq = 0.0;
    let mut jerk_sq = 0.0;
    let (mut s_last, mut d_last) = (s0, 0.0);
    for k in 1..=h {
        let t = k as f64 * DT;
        let (s, ds, dds, ddds, d, dd, ddd, dddd) = if t <= duration {
            (
                lon.eval(t, 0),
                lon.eval(t, 1),
                lon.eval(t, 2),
                lon.eval(t, 3),
                lat.eval(t, 0),
                lat.eval(t, 1),
                lat.eval(t, 2),
                lat.eval(t, 3),
            )
        } else {
            (s_end_poly + v_target * (t - duration), v_target, 0.0, 0.0, d_target, 0.0, 0.0, 0.0)
        };
        accel_sq += (dds * dds + ddd * ddd) * DT;
        jerk_sq += (ddds * ddds + dddd * dddd) * DT;
        let (pt, rh) = route.line.frenet_to_world(s, d);
        let speed = (ds * ds + dd * dd).sqrt();
        let heading = if speed > 1e-6 { normalize_angle(rh + dd.atan2(ds)) } else { rh };
        states.push((Pose2::new(pt.x, pt.y, heading), speed));
        s_last = s;
        d_last = d;
    }
    let collides = !obstacles.is_empty() && collides(&states, obstacles, length, width);
    Candidate {
        d_target,
        v_target,
        duration,
        d_end: d_last,
        v_end: v_target,
        accel_sq,
        jerk_sq,
        progress: (s_last - s0) / (h as f64 * DT),
        collides,
        states,
    }
}

/// Straight-line emergency stop from the current state.
pub fn max_brake_candidate(world: &WorldState, ego: usize, p: &FrenetParams) -> Candidate {
    let me = &world.agents[ego];
    let mut pose = me.pose;
    let mut v = me.speed;
    let mut states = Vec::with_capacity(p.horizon_steps);
    for _ in 0..p.horizon_steps {
        let v_next = (v - p.max_brake * DT).max(0.0);
        let ds = 0.5 * (v + v_next) * DT;
        pose = Pose2::new(pose.x + ds * pose.heading.cos(), pose.y + ds * pose.heading.sin(), pose.heading);
        v = v_next;
        states.push((pose, v));
    }
    Candidate {
        d_target: 0.0,
        v_target: 0.0,
        duration: p.horizon_steps as f64 * DT,
        states,
        d_end: 0.0,
        v_end: 0.0,
        accel_sq: 0.0,
        jerk_sq: 0.0,
        progress: 0.0,
        collides: false,
    }
}

/// Index of the cheapest candidate, earliest on ties, or `None` when all collide
/// under an active collision check.
pub fn select_candidate(cands: &[Candidate], p: &FrenetParams) -> Option<usize> {
    if p.collision_penalty > 0.0 && cands.iter().all(|c| c.collides) {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in cands.iter().enumerate() {
        let cost = c.cost(p);
        if best.is_none_or(|(_, b)| cost < b) {
            best = Some((i, cost));
        }
    }
    best.map(|b| b.0)
}

/// First `n` sub-steps of the selected candidate.
pub fn frenet_plan(
    world: &WorldState,
    ego: usize,
    route: &Route,
    p: &FrenetParams,
    n: usize,
) -> Result<Vec<(Pose2, f64)>> {
    let cands = frenet_candidates(world, ego, route, p)?;
    let chosen = match select_candidate(&cands, p) {
        Some(i) => cands[i].clone(),
        None => max_brake_candidate(world, ego, p),
    };
    let mut out: Vec<(Pose2, f64)> = chosen.states.into_iter().take(n).collect();
    while out.len() < n {
        let last = *out.last().unwrap_or(&(world.agents[ego].pose, 0.0));
        out.push((last.0, 0.0));
    }
    Ok(out)
}
