//! Deterministic 2D world: occupancy map, obstacles, robot kinematics, lidar.

mod geometry;
mod lidar;
mod map;
mod robot;
mod scenario;
mod shapes;
mod world;

pub use geometry::{
    normalize_angle, to_robot_frame, to_world_frame, Pose2D, Twist, Vec2, MAX_ANGULAR, MAX_LINEAR,
};
pub use lidar::{cast_grid, raycast, LidarConfig, LidarScan};
pub use map::{load_map, GridMap, MapError};
pub use robot::{step_robot, RobotState};
pub use scenario::{PedestrianSpec, Scenario, ScenarioError, SCENARIO_VERSION};
pub use shapes::{ray_circle, Obstacle, Shape, MAX_HALF_EXTENT, MIN_HALF_EXTENT};
pub use world::{PedestrianState, WorldConfig, WorldState};

/// Map files shipped with the crate.
pub fn builtin_map(name: &str) -> Option<&'static str> {
    match name {
        "foyer" => Some(include_str!("../../maps/foyer.map")),
        "lab" => Some(include_str!("../../maps/lab.map")),
        _ => None,
    }
}
