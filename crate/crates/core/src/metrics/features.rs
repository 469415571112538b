use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance_to_polyline, normalize_angle};
use crate::scenario::{RoadGraph, DT};
use crate::sim::SubstepRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureCategory {
    Kinematic,
    Interactive,
    Map,
}

impl FeatureCategory {
    pub const ALL: [FeatureCategory; 3] = [Self::Kinematic, Self::Interactive, Self::Map];

    pub fn name(self) -> &'static str {
        match self {
            Self::Kinematic => "kinematic",
            Self::Interactive => "interactive",
            Self::Map => "map",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Speed,
    /// Signed longitudinal acceleration from consecutive speeds.
    AccelMag,
    YawRate,
    NearestAgentDist,
    CollisionFlag,
    /// Distance to the nearest road edge, negative when off road.
    DistToRoadEdge,
    OffroadFlag,
}

impl FeatureKind {
    pub fn category(self) -> FeatureCategory {
        match self {
            Self::Speed | Self::AccelMag | Self::YawRate => FeatureCategory::Kinematic,
            Self::NearestAgentDist | Self::CollisionFlag => FeatureCategory::Interactive,
            Self::DistToRoadEdge | Self::OffroadFlag => FeatureCategory::Map,
        }
    }
}

/// A scalar statistic with the histogram used to estimate its distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub edges: Vec<f64>,
    /// Additive per-bin smoothing mass.
    pub epsilon: f64,
}

fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    (0..=bins).map(|i| lo + (hi - lo) * i as f64 / bins as f64).collect()
}

impl FeatureSpec {
    pub fn new(name: &str, kind: FeatureKind, edges: Vec<f64>, epsilon: f64) -> Result<Self> {
        let s = Self { name: name.to_string(), kind, edges, epsilon };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.edges.len() < 2 || self.edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(format!("feature {}: bin edges must be strictly increasing", self.name)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("feature {}: smoothing must be positive", self.name)));
        }
        Ok(())
    }

    pub fn category(&self) -> FeatureCategory {
        self.kind.category()
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Bin of `v`, clamping out-of-range values to the end bins. The flag
    /// reports whether clamping happened.
    pub fn bin(&self, v: f64) -> (usize, bool) {
        let b = self.bins();
        if v < self.edges[0] {
            return (0, true);
        }
        if v > self.edges[b] {
            return (b - 1, true);
        }
        let i = self.edges[1..].partition_point(|&e| e <= v);
        (i.min(b - 1), false)
    }

    pub fn defaults() -> Vec<FeatureSpec> {
        let eps = 1e-3;
        let flag = vec![-0.5, 0.5, 1.5];
        vec![
            Self::new("speed", FeatureKind::Speed, uniform_edges(0.0, 30.0, 20), eps),
            Self::new("accel", FeatureKind::AccelMag, uniform_edges(-8.0, 8.0, 16), eps),
            Self::new("yaw_rate", FeatureKind::YawRate, uniform_edges(-1.0, 1.0, 16), eps),
            Self::new("nearest_agent_dist", FeatureKind::NearestAgentDist, uniform_edges(0.0, 50.0, 20), eps),
            Self::new("collision", FeatureKind::CollisionFlag, flag.clone(), eps),
            Self::new("dist_to_road_edge", FeatureKind::DistToRoadEdge, uniform_edges(-5.0, 15.0, 20), eps),
            Self::new("offroad", FeatureKind::OffroadFlag, flag, eps),
        ]
        .into_iter()
        .map(|r| r.expect("default feature specs are valid"))
        .collect()
    }
}

/// Value of a feature for `agent` at record `t` of a rollout, or `None`
/// when the agent (or a neighbor it needs) is not present.
pub fn extract_feature(
    kind: FeatureKind,
    records: &[SubstepRecord],
    t: usize,
    agent: usize,
    road: &RoadGraph,
) -> Option<f64> {
    let rec = &records[t];
    let me = &rec.agents[agent];
    if !me.valid {
        return None;
    }
    let prev = || {
        let p = &records[t.checked_sub(1)?].agents[agent];
        p.valid.then_some(p)
    };
    match kind {
        FeatureKind::Speed => Some(me.speed),
        FeatureKind::AccelMag => prev().map(|p| (me.speed - p.speed) / DT),
        FeatureKind::YawRate => prev().map(|p| normalize_angle(me.pose.heading - p.pose.heading) / DT),
        FeatureKind::NearestAgentDist => rec
            .agents
            .iter()
            .enumerate()
            .filter(|(j, o)| *j != agent && o.valid)
            .map(|(_, o)| o.pose.position().dist(&me.pose.position()))
            .reduce(f64::min),
        FeatureKind::CollisionFlag => Some(rec.collided[agent] as u8 as f64),
        FeatureKind::OffroadFlag => Some(rec.offroad[agent] as u8 as f64),
        FeatureKind::DistToRoadEdge => {
            let p = me.pose.position();
            let d = road.road_edges.iter().map(|e| distance_to_polyline(&p, e)).reduce(f64::min)?;
            Some(if rec.offroad[agent] { -d } else { d })
        }
    }
}
