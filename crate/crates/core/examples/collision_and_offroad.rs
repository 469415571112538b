//! Event predicates on hand-placed vehicles.

use anchorplay::geometry::{Point2, Pose2};
use anchorplay::scenario::{collision_check, goal_check, offroad_check, AgentState, GoalSpec, RoadGraph};

fn car(x: f64, y: f64, heading: f64) -> AgentState {
    AgentState { pose: Pose2::new(x, y, heading), speed: 0.0, length: 4.5, width: 2.0, valid: true }
}

fn main() -> anchorplay::error::Result<()> {
    let road = RoadGraph {
        lane_centerlines: vec![vec![Point2::new(-50.0, 0.0), Point2::new(50.0, 0.0)]],
        road_edges: vec![],
        drivable_areas: vec![vec![
            Point2::new(-50.0, -4.0),
            Point2::new(50.0, -4.0),
            Point2::new(50.0, 4.0),
            Point2::new(-50.0, 4.0),
        ]],
    };
    let a = car(0.0, 0.0, 0.0);
    for (label, b) in [
        ("bumper to bumper", car(4.4, 0.0, 0.0)),
        ("one metre gap", car(5.5, 0.0, 0.0)),
        ("crossing at 90 degrees", car(2.0, 2.0, std::f64::consts::FRAC_PI_2)),
        ("adjacent lane", car(0.0, 2.5, 0.0)),
    ] {
        println!("{label:<24} collides: {}", collision_check(&a, &b)?);
    }
    for y in [0.0, 3.9, 4.0, 4.1] {
        println!("center at y = {y:<4} offroad: {}", offroad_check(&car(0.0, y, 0.0), &road)?);
    }
    let goal = GoalSpec { position: Point2::new(30.0, 0.0), radius: 2.0 };
    println!("at goal from 1.5 m: {}", goal_check(&car(28.5, 0.0, 0.0), &goal));
    Ok(())
}
