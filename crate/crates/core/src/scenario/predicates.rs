use crate::error::{Error, Result};
use crate::geometry::{point_in_polygon, Obb};

use super::{AgentState, GoalSpec, RoadGraph};

/// Oriented-box overlap between two agents.
pub fn collision_check(a: &AgentState, b: &AgentState) -> Result<bool> {
    if !a.pose.is_finite() || !b.pose.is_finite() {
        return Err(Error::NonFinite("agent pose"));
    }
    let ba = Obb::new(&a.pose, a.length, a.width);
    let bb = Obb::new(&b.pose, b.length, b.width);
    Ok(ba.overlaps(&bb))
}

/// True when the agent's center lies outside every drivable polygon.
///
/// Only the center point is tested; a box straddling the road edge is still
/// on-road as long as its center is inside (or on the boundary of) a polygon.
pub fn offroad_check(a: &AgentState, rg: &RoadGraph) -> Result<bool> {
    if rg.drivable_areas.is_empty() {
        return Err(Error::InvalidArgument("road graph has no drivable polygons".into()));
    }
    if !a.pose.is_finite() {
        return Err(Error::NonFinite("agent pose"));
    }
    let c = a.pose.position();
    Ok(!rg.drivable_areas.iter().any(|poly| point_in_polygon(&c, poly)))
}

/// Goal reached when the center is within the goal radius (inclusive).
pub fn goal_check(a: &AgentState, g: &GoalSpec) -> bool {
    a.pose.position().dist(&g.position) <= g.radius
}
