//! Full simulation state and the physics step.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::geometry::{Pose2D, Twist, Vec2};
use super::lidar::LidarConfig;
use super::map::GridMap;
use super::robot::{step_robot, RobotState};
use super::scenario::Scenario;
use super::shapes::Obstacle;
use crate::pedestrians::{step_pedestrians, SocialForceParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Physics step, s.
    pub dt: f64,
    /// Physics steps per control tick.
    pub control_every: u32,
    /// Physics steps between pedestrian-history samples.
    pub history_every: u32,
    /// Samples per pedestrian history row.
    pub history_k: usize,
    pub robot_radius: f64,
    pub pedestrian_radius: f64,
    pub lidar: LidarConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            control_every: 2,
            history_every: 5,
            history_k: 8,
            robot_radius: 0.35,
            pedestrian_radius: 0.25,
            lidar: LidarConfig::default(),
        }
    }
}

impl WorldConfig {
    pub fn control_period(&self) -> f64 {
        self.dt * self.control_every as f64
    }

    pub fn history_period(&self) -> f64 {
        self.dt * self.history_every as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PedestrianState {
    pub pos: Vec2,
    pub vel: Vec2,
    pub radius: f64,
    pub desired_speed: f64,
    pub subgoals: Vec<Vec2>,
    pub next_subgoal: usize,
    /// Past positions sampled at the history rate, oldest first.
    pub history: VecDeque<Vec2>,
}

impl PedestrianState {
    pub fn current_subgoal(&self) -> Option<Vec2> {
        self.subgoals.get(self.next_subgoal).copied()
    }

    pub fn is_static(&self) -> bool {
        self.current_subgoal().is_none()
    }
}

#[derive(Clone, Debug)]
pub struct WorldState {
    pub map: Arc<GridMap>,
    pub robot: RobotState,
    pub obstacles: Vec<Obstacle>,
    pub pedestrians: Vec<PedestrianState>,
    pub sim_time: f64,
    pub steps: u64,
    pub seed: u64,
    pub sf: SocialForceParams,
    pub config: WorldConfig,
}

impl WorldState {
    pub fn from_scenario(map: Arc<GridMap>, scenario: &Scenario, config: &WorldConfig) -> Self {
        let pedestrians = scenario
            .pedestrians
            .iter()
            .map(|p| PedestrianState {
                pos: p.start.position(),
                vel: Vec2::ZERO,
                radius: config.pedestrian_radius,
                desired_speed: p.desired_speed,
                subgoals: p.subgoals.clone(),
                next_subgoal: 0,
                history: VecDeque::from([p.start.position()]),
            })
            .collect();
        Self {
            map,
            robot: RobotState::new(scenario.robot_start, config.robot_radius),
            obstacles: scenario.obstacles.clone(),
            pedestrians,
            sim_time: 0.0,
            steps: 0,
            seed: scenario.seed,
            sf: scenario.sf_params.clone().unwrap_or_default(),
            config: config.clone(),
        }
    }

    /// One physics step: pedestrians react to the current state, then the robot moves.
    pub fn step(&mut self, cmd: Twist) {
        let dt = self.config.dt;
        let sf = self.sf.clone();
        step_pedestrians(self, &sf, dt);
        self.robot = step_robot(&self.robot, cmd, dt);
        self.steps += 1;
        self.sim_time = self.steps as f64 * dt;
        if self.steps.is_multiple_of(self.config.history_every as u64) {
            let k = self.config.history_k;
            for p in &mut self.pedestrians {
                p.history.push_back(p.pos);
                while p.history.len() > k {
                    p.history.pop_front();
                }
            }
        }
    }

    /// Distance from `p` to walls and obstacles, capped at `cutoff`.
    pub fn static_clearance(&self, p: Vec2, cutoff: f64) -> f64 {
        let wall = self.map.nearest_occupied(p, cutoff).map_or(cutoff, |(_, d)| d);
        self.obstacles
            .iter()
            .map(|o| o.distance(p))
            .fold(wall, f64::min)
    }

    /// Center-to-center distance from the robot to the closest pedestrian.
    pub fn min_pedestrian_distance(&self) -> f64 {
        let r = self.robot.pose.position();
        self.pedestrians
            .iter()
            .map(|p| p.pos.dist(r))
            .fold(f64::INFINITY, f64::min)
    }

    /// Observed pedestrian trajectories in the frame of `pose`: one row of
    /// `2k` floats per pedestrian within `range`, oldest sample first. Short
    /// histories are front-padded with their oldest sample.
    pub fn history_rows(&self, pose: &Pose2D, range: f64) -> Vec<Vec<f64>> {
        let k = self.config.history_k;
        self.pedestrians
            .iter()
            .filter(|p| p.pos.dist(pose.position()) <= range)
            .map(|p| {
                let oldest = *p.history.front().unwrap_or(&p.pos);
                let pad = k.saturating_sub(p.history.len());
                let mut row = Vec::with_capacity(2 * k);
                for q in std::iter::repeat_n(oldest, pad).chain(p.history.iter().copied()) {
                    let l = pose.to_local(q);
                    row.push(l.x);
                    row.push(l.y);
                }
                row
            })
            .collect()
    }
}
