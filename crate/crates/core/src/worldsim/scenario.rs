//! Scenario documents: robot start/goal, obstacles and pedestrian routes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::geometry::{Pose2D, Vec2};
use super::map::GridMap;
use super::shapes::Obstacle;
use crate::pedestrians::SocialForceParams;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported scenario version {0}")]
    Version(u32),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PedestrianSpec {
    pub start: Pose2D,
    /// Visited in order; an empty list makes a static person.
    pub subgoals: Vec<Vec2>,
    pub desired_speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub v: u32,
    pub map_ref: String,
    pub robot_start: Pose2D,
    pub goal: Vec2,
    pub obstacles: Vec<Obstacle>,
    pub pedestrians: Vec<PedestrianSpec>,
    pub seed: u64,
    /// Environment-condition label used to group metrics (e.g. `E4`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sf_params: Option<SocialForceParams>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        if s.v != SCENARIO_VERSION {
            return Err(ScenarioError::Version(s.v));
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn condition(&self) -> &str {
        self.condition.as_deref().unwrap_or("-")
    }

    /// Distance from `p` to the nearest static geometry (walls and obstacles), capped at `cutoff`.
    pub fn static_clearance(&self, map: &GridMap, p: Vec2, cutoff: f64) -> f64 {
        let wall = map.nearest_occupied(p, cutoff).map_or(cutoff, |(_, d)| d);
        self.obstacles
            .iter()
            .map(|o| o.distance(p))
            .fold(wall, f64::min)
    }

    /// Checks that the robot and every pedestrian start in free space.
    pub fn validate(&self, map: &GridMap, robot_radius: f64, ped_radius: f64) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if !self.robot_start.is_finite() || !self.goal.is_finite() {
            return invalid("non-finite robot start or goal".into());
        }
        if self.static_clearance(map, self.robot_start.position(), robot_radius) < robot_radius {
            return invalid("robot start is not in free space".into());
        }
        if self.static_clearance(map, self.goal, robot_radius) < robot_radius {
            return invalid("goal is not in free space".into());
        }
        for (i, p) in self.pedestrians.iter().enumerate() {
            if self.static_clearance(map, p.start.position(), ped_radius) < ped_radius {
                return invalid(format!("pedestrian {i} starts inside an obstacle"));
            }
            if !(p.desired_speed > 0.0) && !p.subgoals.is_empty() {
                return invalid(format!("pedestrian {i} has non-positive desired speed"));
            }
        }
        if let Some(sf) = &self.sf_params {
            sf.validate()
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }
        Ok(())
    }
}
