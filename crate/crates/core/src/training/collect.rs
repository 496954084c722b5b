//! Expert demonstrations and the dataset-quality gate.

use std::cell::RefCell;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::subgoal;
use crate::eval::episode::{run_episode, run_episode_observed, scenario_id, Controller, EpisodeConfig, EpisodeError, Outcome};
use crate::eval::metrics::PC_DISTANCE;
use crate::expert::{expert_command, ExpertParams};
use crate::global_planner::downsample;
use crate::par;
use crate::worldsim::{raycast, GridMap, Scenario, WorldConfig};

use super::archive::{DemoEpisode, DemoRecord};

/// Minimum reached-goal fraction of the expert quality gate.
pub const GATE_MIN_RG: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub scenario: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub attempted: usize,
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

/// Runs the expert once and samples a record every history period.
/// `Ok(Err(_))` is an episode the expert did not complete cleanly.
pub fn record_episode(
    map: Arc<GridMap>,
    scenario: &Scenario,
    params: ExpertParams,
    world_cfg: &WorldConfig,
    cfg: &EpisodeConfig,
) -> Result<Result<DemoEpisode, Rejection>, EpisodeError> {
    let steps = RefCell::new(Vec::new());
    let records = RefCell::new(Vec::new());
    let every = world_cfg.history_every as u64;
    let log = run_episode_observed(map, scenario, Controller::Expert(params), world_cfg, cfg, |view| {
        let world = view.world;
        steps.borrow_mut().push(view.cmd);
        if world.steps % every != 0 {
            return;
        }
        let expert = view.expert.expect("expert episode");
        let pose = world.robot.pose;
        let scan = raycast(world, &pose);
        records.borrow_mut().push(DemoRecord {
            step: world.steps as u32,
            time: world.sim_time,
            pose,
            odom: world.robot.twist,
            humans: world.history_rows(&pose, world.config.lidar.r_max),
            plan: downsample(view.route, &pose, view.goal).to_frame(&pose).to_vec(),
            subgoal: subgoal(view.route, &pose, view.goal),
            expert_cmd: expert_command(world, expert.plan(), view.goal, &expert.params, &scan),
            ranges: scan.ranges,
        });
    })?;
    let reject = |reason: String| {
        Ok(Err(Rejection {
            scenario: log.scenario.clone(),
            reason,
        }))
    };
    match log.outcome {
        Outcome::Reached => {}
        Outcome::Timeout => return reject(format!("timeout after {:.1} s", log.duration)),
        Outcome::Failure => return reject(format!("collision with static geometry at {:.2} s", log.duration)),
    }
    let min_ped = log.ticks.iter().map(|t| t.min_ped).fold(f64::INFINITY, f64::min);
    if min_ped < PC_DISTANCE {
        return reject(format!("pedestrian collision (closest approach {min_ped:.3} m)"));
    }
    Ok(Ok(DemoEpisode {
        scenario: log.scenario,
        condition: scenario.condition().to_string(),
        steps: steps.into_inner(),
        records: records.into_inner(),
    }))
}

/// Records every scenario (in parallel when enabled); failed expert runs are
/// dropped and listed in the report. Output order follows `scenarios`.
pub fn collect_demos(
    scenarios: &[(Arc<GridMap>, Scenario)],
    params: ExpertParams,
    world_cfg: &WorldConfig,
    cfg: &EpisodeConfig,
) -> Result<(Vec<DemoEpisode>, RejectionReport), EpisodeError> {
    let results = par::map(scenarios, |(map, s)| record_episode(map.clone(), s, params, world_cfg, cfg));
    let mut episodes = Vec::new();
    let mut report = RejectionReport {
        attempted: scenarios.len(),
        ..Default::default()
    };
    for r in results {
        match r? {
            Ok(ep) => episodes.push(ep),
            Err(rej) => report.rejected.push(rej),
        }
    }
    report.accepted = episodes.len();
    Ok((episodes, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub episodes: usize,
    pub reached: usize,
    /// Episodes with at least one pedestrian collision.
    pub pc_episodes: usize,
    pub failed_scenarios: Vec<String>,
    pub passed: bool,
}

/// Expert quality gate: no pedestrian collision and a high reached-goal rate.
pub fn expert_gate(
    scenarios: &[(Arc<GridMap>, Scenario)],
    params: ExpertParams,
    world_cfg: &WorldConfig,
    cfg: &EpisodeConfig,
) -> Result<GateReport, EpisodeError> {
    let logs = par::map(scenarios, |(map, s)| run_episode(map.clone(), s, Controller::Expert(params), world_cfg, cfg));
    let mut report = GateReport {
        episodes: scenarios.len(),
        reached: 0,
        pc_episodes: 0,
        failed_scenarios: Vec::new(),
        passed: false,
    };
    for (log, (_, s)) in logs.into_iter().zip(scenarios) {
        let log = log?;
        let pc = log.ticks.iter().any(|t| t.min_ped < PC_DISTANCE);
        if log.outcome == Outcome::Reached {
            report.reached += 1;
        }
        if pc {
            report.pc_episodes += 1;
        }
        if pc || log.outcome != Outcome::Reached {
            report.failed_scenarios.push(scenario_id(s));
        }
    }
    report.passed = report.pc_episodes == 0 && report.reached as f64 >= GATE_MIN_RG * report.episodes as f64;
    Ok(report)
}
