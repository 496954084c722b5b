use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{aux_input, subgoal, ConcatNet};
use crate::eval::scenarios::static_route;
use crate::expert::{Expert, ExpertParams};
use crate::global_planner::FullPlan;
use crate::nn::NnError;
use crate::policy::{observe_with_scan, LocalPlan, PolicyNets};
use crate::worldsim::{raycast, GridMap, Pose2D, Scenario, Twist, Vec2, WorldConfig, WorldState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Reached,
    Timeout,
    Failure,
}

/// Per-control-tick record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tick {
    pub t: f64,
    pub pose: Pose2D,
    /// Actuated (clamped) command.
    pub cmd: Twist,
    pub min_range: f64,
    /// Center distance to the closest pedestrian; infinite when there are none.
    #[serde(with = "inf_as_null")]
    pub min_ped: f64,
    pub goal_dist: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<LocalPlan>,
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub scenario: String,
    pub condition: String,
    pub policy: String,
    pub robot_radius: f64,
    pub control_period: f64,
    pub goal: Vec2,
    pub ticks: Vec<Tick>,
    pub outcome: Outcome,
    /// Simulated duration, s.
    pub duration: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub goal_tolerance: f64,
    pub time_limit: f64,
    /// Allowed overlap of the robot body with static geometry before failure, m.
    pub failure_overlap: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            goal_tolerance: 0.5,
            time_limit: 90.0,
            failure_overlap: 0.05,
        }
    }
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("scenario {0}: no static-map route from start to goal")]
    NoRoute(String),
    #[error("scenario {0}: {1}")]
    Invalid(String, String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// The policy driving an episode.
#[derive(Clone, Copy, Debug)]
pub enum Controller<'a> {
    Proposed(&'a PolicyNets),
    Baseline(&'a ConcatNet),
    Expert(ExpertParams),
}

impl Controller<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Controller::Proposed(_) => "proposed",
            Controller::Baseline(n) => n.kind.prefix(),
            Controller::Expert(_) => "expert",
        }
    }
}

/// What an observer sees just before each physics step.
pub struct StepView<'a> {
    pub world: &'a WorldState,
    pub cmd: Twist,
    pub route: &'a FullPlan,
    pub goal: Vec2,
    pub expert: Option<&'a Expert>,
}

pub fn robot_failed(world: &WorldState, cfg: &EpisodeConfig) -> bool {
    let r = world.robot.radius;
    world.static_clearance(world.robot.pose.position(), r) < r - cfg.failure_overlap
}

pub fn scenario_id(s: &Scenario) -> String {
    format!("{}-{:016x}", s.condition(), s.seed)
}

pub fn run_episode(
    map: Arc<GridMap>,
    scenario: &Scenario,
    ctrl: Controller,
    world_cfg: &WorldConfig,
    cfg: &EpisodeConfig,
) -> Result<EpisodeLog, EpisodeError> {
    run_episode_observed(map, scenario, ctrl, world_cfg, cfg, |_| {})
}

/// Runs one episode, calling `observer` before every physics step.
pub fn run_episode_observed(
    map: Arc<GridMap>,
    scenario: &Scenario,
    ctrl: Controller,
    world_cfg: &WorldConfig,
    cfg: &EpisodeConfig,
    mut observer: impl FnMut(&StepView),
) -> Result<EpisodeLog, EpisodeError> {
    let id = scenario_id(scenario);
    scenario
        .validate(&map, world_cfg.robot_radius, world_cfg.pedestrian_radius)
        .map_err(|e| EpisodeError::Invalid(id.clone(), e.to_string()))?;
    let route = static_route(&map, scenario, world_cfg).ok_or_else(|| EpisodeError::NoRoute(id.clone()))?;
    let mut world = WorldState::from_scenario(map, scenario, world_cfg);
    let goal = scenario.goal;
    let mut expert = match ctrl {
        Controller::Expert(p) => Some(Expert::new(&world, goal, p, route.clone())),
        _ => None,
    };
    let mut ticks = Vec::new();
    let outcome = 'episode: loop {
        let pose = world.robot.pose;
        let goal_dist = pose.position().dist(goal);
        let scan = raycast(&world, &pose);
        let mut tick = Tick {
            t: world.sim_time,
            pose,
            cmd: Twist::ZERO,
            min_range: scan.min_range(),
            min_ped: world.min_pedestrian_distance(),
            goal_dist,
            a: None,
            b: None,
            plan: None,
        };
        if goal_dist < cfg.goal_tolerance {
            ticks.push(tick);
            break Outcome::Reached;
        }
        if world.sim_time >= cfg.time_limit - 1e-9 {
            ticks.push(tick);
            break Outcome::Timeout;
        }
        tick.cmd = match ctrl {
            Controller::Proposed(nets) => {
                let input = observe_with_scan(&world, &route, goal, &scan);
                let out = nets.act(&input)?;
                tick.a = Some(out.readout.a);
                tick.b = Some(out.readout.b);
                tick.plan = Some(out.plan);
                out.cmd
            }
            Controller::Baseline(net) => {
                let input = observe_with_scan(&world, &route, goal, &scan);
                let aux = aux_input(net.kind, &input, subgoal(&route, &pose, goal));
                net.act(&input.lidar, &aux)?.0
            }
            Controller::Expert(_) => expert.as_mut().unwrap().command(&world, &scan),
        };
        let cmd = tick.cmd;
        ticks.push(tick);
        for _ in 0..world_cfg.control_every {
            observer(&StepView {
                world: &world,
                cmd,
                route: &route,
                goal,
                expert: expert.as_ref(),
            });
            world.step(cmd);
            if robot_failed(&world, cfg) {
                break 'episode Outcome::Failure;
            }
        }
    };
    Ok(EpisodeLog {
        scenario: id,
        condition: scenario.condition().to_string(),
        policy: ctrl.name().to_string(),
        robot_radius: world_cfg.robot_radius,
        control_period: world_cfg.control_period(),
        goal,
        ticks,
        outcome,
        duration: world.sim_time,
    })
}
