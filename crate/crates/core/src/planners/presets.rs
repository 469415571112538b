use serde::{Deserialize, Serialize};

use super::frenet::FrenetParams;
use super::idm::IdmParams;

/// A named rule-based planner configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PlannerPreset {
    Idm { name: String, params: IdmParams },
    Frenet { name: String, params: FrenetParams },
}

impl PlannerPreset {
    pub fn name(&self) -> &str {
        match self {
            PlannerPreset::Idm { name, .. } | PlannerPreset::Frenet { name, .. } => name,
        }
    }
}

/// Structured-text list of presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetFile {
    pub presets: Vec<PlannerPreset>,
}

// Safety focus levels map to collision penalties.
const PENALTY_LOW: f64 = 500.0;
const PENALTY_MEDIUM: f64 = 1000.0;
const PENALTY_HIGH: f64 = 5000.0;

pub fn frenet_presets() -> Vec<(String, FrenetParams)> {
    let base = FrenetParams { collision_penalty: PENALTY_MEDIUM, ..FrenetParams::default() };
    let v = |name: &str, p: FrenetParams| (name.to_string(), p);
    vec![
        v("Baseline", base),
        v(
            "Aggressive",
            FrenetParams {
                v_max: 35.0,
                w_lateral: 5.0,
                w_velocity: 0.5,
                w_progress: 2.0,
                collision_penalty: PENALTY_LOW,
                ..base
            },
        ),
        v(
            "Conservative",
            FrenetParams {
                v_max: 20.0,
                w_lateral: 50.0,
                w_acceleration: 3.0,
                w_jerk: 1.5,
                collision_penalty: PENALTY_HIGH,
                ..base
            },
        ),
        v("Smooth Rider", FrenetParams { w_lateral: 20.0, w_velocity: 2.0, w_acceleration: 5.0, w_jerk: 3.0, ..base }),
        v("Lane Keeper", FrenetParams { w_lateral: 100.0, lateral_span: 1.5, ..base }),
        v("Wide Search", FrenetParams { n_lateral: 20, n_velocity: 10, n_time: 7, ..base }),
        v("Fast Planner", FrenetParams { n_lateral: 5, n_velocity: 3, n_time: 2, horizon_steps: 20, ..base }),
        v("Long Horizon", FrenetParams { horizon_steps: 40, ..base }),
        v("No Collision", FrenetParams { collision_penalty: 0.0, ..base }),
        v("High Speed", FrenetParams { v_min: 5.0, v_max: 40.0, velocity_span: 15.0, ..base }),
    ]
}

pub fn idm_presets() -> Vec<(String, IdmParams)> {
    let base = IdmParams::default();
    let v = |name: &str, v0: f64, s0: f64, t: f64, aggr: f64, extra: IdmParams| {
        (name.to_string(), IdmParams { v0, s0, time_headway: t, aggressiveness: aggr, ..extra })
    };
    vec![
        v("IDM Baseline", 30.0, 2.0, 1.5, 0.5, base),
        v("IDM Conservative", 25.0, 3.0, 2.0, 0.2, IdmParams { a_max: 1.5, b_comf: 2.0, safety_factor: 1.5, ..base }),
        v("IDM Aggressive", 35.0, 1.5, 1.0, 0.8, IdmParams { a_max: 3.0, b_comf: 4.0, safety_factor: 0.9, ..base }),
        v("IDM Comfort", 28.0, 2.5, 1.8, 0.3, IdmParams { a_max: 1.5, b_comf: 2.0, max_jerk: Some(2.0), ..base }),
        v("IDM Highway", 40.0, 3.0, 1.2, 0.6, IdmParams { perception_range: 100.0, ..base }),
        v("IDM City", 15.0, 2.0, 1.5, 0.4, IdmParams { perception_range: 30.0, ..base }),
        v("IDM Truck", 25.0, 4.0, 2.0, 0.3, IdmParams { vehicle_length: Some(8.0), ..base }),
        v("IDM Emergency", 40.0, 1.5, 0.8, 0.9, IdmParams { a_max: 4.0, ..base }),
        v("IDM Adaptive", 30.0, 2.5, 1.5, 0.5, IdmParams { reaction_time: 0.2, ..base }),
        v("IDM Defensive", 25.0, 4.0, 2.5, 0.1, IdmParams { ttc_threshold: Some(3.0), ..base }),
    ]
}
