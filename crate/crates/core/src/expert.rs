//! Privileged scripted demonstrator.
//!
//! The expert sees the full world state. It follows its own plan, which,
//! unlike the learned policies' plan, keeps clear of scenario obstacles and
//! standing people, and it governs speed around pedestrians so that it stays
//! out of their way rather than relying on them to step aside.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::global_planner::{nearest_free, plan_on_grid, point_ahead, BlockedGrid, FullPlan};
use crate::worldsim::{step_robot, LidarScan, RobotState, Twist, Vec2, WorldState, MAX_ANGULAR, MAX_LINEAR};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertParams {
    /// Pure-pursuit lookahead along the plan, m.
    pub lookahead: f64,
    pub cruise_speed: f64,
    /// Push of the steering target away from nearby static geometry.
    pub obstacle_gain: f64,
    /// Push of the steering target away from current and predicted pedestrian positions.
    pub pedestrian_gain: f64,
    /// Pedestrians closer than this slow the robot down, m.
    pub slow_radius: f64,
    pub goal_brake_radius: f64,
    /// Seconds between privileged replans.
    pub replan_period: f64,
    /// Clearance the privileged plan keeps from walls and obstacles, m.
    pub wall_margin: f64,
    /// Clearance the privileged plan keeps from standing people, m.
    pub person_margin: f64,
}

impl Default for ExpertParams {
    fn default() -> Self {
        Self {
            lookahead: 1.2,
            cruise_speed: 0.5,
            obstacle_gain: 0.6,
            pedestrian_gain: 0.8,
            slow_radius: 1.5,
            goal_brake_radius: 1.0,
            replan_period: 1.0,
            wall_margin: 0.6,
            person_margin: 1.2,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid expert parameter {0}")]
pub struct ExpertParamError(pub &'static str);

impl ExpertParams {
    pub fn validate(&self) -> Result<(), ExpertParamError> {
        let checks = [
            ("lookahead", self.lookahead),
            ("cruise_speed", self.cruise_speed),
            ("obstacle_gain", self.obstacle_gain),
            ("pedestrian_gain", self.pedestrian_gain),
            ("slow_radius", self.slow_radius),
            ("goal_brake_radius", self.goal_brake_radius),
            ("replan_period", self.replan_period),
            ("wall_margin", self.wall_margin),
            ("person_margin", self.person_margin),
        ];
        for (name, v) in checks {
            if !(v.is_finite() && v > 0.0) {
                return Err(ExpertParamError(name));
            }
        }
        if self.cruise_speed > MAX_LINEAR {
            return Err(ExpertParamError("cruise_speed"));
        }
        Ok(())
    }
}

/// Radius of the personal-space band, m.
pub const PROXEMIC_BAND: f64 = 1.2;
/// Pedestrians slower than this count as standing, including ones waiting
/// for the robot to clear their way.
const STANDING_SPEED: f64 = 0.05;
/// A strip with at least this much free travel counts as open, m.
const OPEN_STRIP: f64 = 0.5;
/// Look-ahead of the pedestrian safety filter, s.
const SAFETY_HORIZON: f64 = 2.0;
const SAFETY_DT: f64 = 0.1;
const SAFE_SEPARATION: f64 = 0.8;

fn is_standing(p: &crate::worldsim::PedestrianState) -> bool {
    p.vel.norm() < STANDING_SPEED
}

/// One command of the expert policy given its current plan.
pub fn expert_command(world: &WorldState, plan: &FullPlan, goal: Vec2, p: &ExpertParams, scan: &LidarScan) -> Twist {
    let pose = world.robot.pose;
    let pos = pose.position();
    let radius = world.robot.radius;
    let d_goal = pos.dist(goal);

    let mut target = point_ahead(plan, pos, goal, p.lookahead);
    let target_is_goal = target == goal;
    if !target_is_goal {
        for ped in &world.pedestrians {
            for tau in [0.0, 0.5, 1.0] {
                let q = ped.pos + ped.vel * tau;
                let dv = target - q;
                let d = dv.norm();
                let reach = 1.5;
                if d < reach {
                    let dir = dv.normalized().unwrap_or_else(|| (pos - q).normalized().unwrap_or(Vec2::new(1.0, 0.0)));
                    target += dir * (p.pedestrian_gain * (reach - d) / 3.0);
                }
            }
        }
        if let Some((np, d)) = world.map.nearest_occupied(target, 0.8) {
            if let Some(dir) = (target - np).normalized() {
                target += dir * (p.obstacle_gain * (0.8 - d));
            }
        }
        for o in &world.obstacles {
            let d = o.distance(target);
            if d < 0.8 {
                if let Some(dir) = (target - o.nearest_point(target)).normalized() {
                    target += dir * (p.obstacle_gain * (0.8 - d));
                }
            }
        }
    }

    let local = pose.to_local(target);
    let mut alpha = local.y.atan2(local.x);
    // When the straight strip toward the target is blocked, head for the
    // nearest direction whose strip is open instead.
    if strip_clearance(scan, alpha, radius) < OPEN_STRIP {
        let mut best: Option<f64> = None;
        for k in 1..=24 {
            for s in [-1.0, 1.0] {
                let d = alpha + s * k as f64 * 0.075;
                if d.abs() <= std::f64::consts::FRAC_PI_2 + 0.3
                    && best.is_none()
                    && strip_clearance(scan, d, radius) >= OPEN_STRIP
                {
                    best = Some(d);
                }
            }
        }
        if let Some(d) = best {
            alpha = d;
        }
    }
    let w = (1.5 * alpha).clamp(-MAX_ANGULAR, MAX_ANGULAR);
    let turn_limit = 0.9;
    let mut v = p.cruise_speed * (1.0 - alpha.abs() / turn_limit).max(0.0);
    let front = strip_clearance(scan, 0.0, radius);
    v = v.min(p.cruise_speed * ((front - 0.1) / 0.5).clamp(0.0, 1.0));

    // Pedestrians.
    for ped in &world.pedestrians {
        let rel = pose.to_local(ped.pos);
        let d = rel.norm();
        let standing = is_standing(ped);
        // A standing person is already routed around by the plan, so only
        // a body-on-body course stops the robot.
        let (corridor, stop) = if standing { (0.6, 1.0) } else { (0.95, PROXEMIC_BAND) };
        let ahead = rel.x > 0.0 && rel.y.abs() < corridor;
        if ahead && d < stop {
            v = v.min(0.0);
        } else if rel.x > -0.2 && d < p.slow_radius {
            let s = ((d - 0.6) / (p.slow_radius - 0.6)).clamp(0.0, 1.0);
            v = v.min(p.cruise_speed * (0.2 + 0.8 * s));
        }
        if !standing {
            for tau in [0.5, 1.0] {
                let q = pose.to_local(ped.pos + ped.vel * tau);
                if q.x > 0.0 && q.y.abs() < corridor && q.norm() < PROXEMIC_BAND {
                    v = v.min(0.0);
                }
            }
        }
    }

    if d_goal < p.goal_brake_radius {
        v = v.min(p.cruise_speed * d_goal / p.goal_brake_radius);
    }
    safety_filter(world, Twist::new(v, w).clamped())
}

/// Smallest predicted robot-pedestrian center distance over the horizon when
/// holding `cmd`, pedestrians extrapolated at constant velocity. `None` when
/// the motion would bring the body too close to static geometry.
fn predicted_separation(world: &WorldState, cmd: Twist) -> Option<f64> {
    let mut robot = RobotState { twist: cmd, ..world.robot };
    let mut sep = world.min_pedestrian_distance();
    let steps = (SAFETY_HORIZON / SAFETY_DT).round() as usize;
    for i in 1..=steps {
        robot = step_robot(&robot, cmd, SAFETY_DT);
        let pos = robot.pose.position();
        if cmd.v != 0.0 && world.static_clearance(pos, 1.0) < robot.radius + 0.05 {
            return None;
        }
        let t = i as f64 * SAFETY_DT;
        for ped in &world.pedestrians {
            sep = sep.min(pos.dist(ped.pos + ped.vel * t));
        }
    }
    Some(sep)
}

/// Keeps the nominal command unless a moving pedestrian is predicted to come
/// within `SAFE_SEPARATION`; then picks the candidate that keeps them furthest.
fn safety_filter(world: &WorldState, nominal: Twist) -> Twist {
    let threat = world
        .pedestrians
        .iter()
        .any(|p| !is_standing(p) && p.pos.dist(world.robot.pose.position()) < SAFETY_HORIZON * 1.5 + 0.5);
    if !threat {
        return nominal;
    }
    let nominal_sep = predicted_separation(world, nominal).unwrap_or(f64::NEG_INFINITY);
    if nominal_sep >= SAFE_SEPARATION {
        return nominal;
    }
    let mut best = (nominal_sep, nominal);
    for v in [-0.3, -0.15, 0.0, 0.15, 0.3, 0.5] {
        for w in [nominal.w, 0.0, -MAX_ANGULAR, MAX_ANGULAR] {
            let cmd = Twist::new(v, w).clamped();
            if let Some(sep) = predicted_separation(world, cmd) {
                // Prefer the nominal-like candidate once separation is adequate.
                let score = sep.min(SAFE_SEPARATION) - 0.01 * (cmd.v - nominal.v).abs();
                let best_score = best.0.min(SAFE_SEPARATION) - 0.01 * (best.1.v - nominal.v).abs();
                if score > best_score {
                    best = (sep, cmd);
                }
            }
        }
    }
    best.1
}

/// Free travel along direction `dir` (sensor frame) before the body, a disc
/// of `radius`, would touch a lidar return.
fn strip_clearance(scan: &LidarScan, dir: f64, radius: f64) -> f64 {
    let inc = (scan.angle_max - scan.angle_min) / (scan.ranges.len().max(2) - 1) as f64;
    let (c, s) = (dir.cos(), dir.sin());
    scan.ranges
        .iter()
        .enumerate()
        .filter_map(|(i, &r)| {
            let phi = scan.angle_min + i as f64 * inc;
            let (px, py) = (r * phi.cos(), r * phi.sin());
            let (x, y) = (c * px + s * py, -s * px + c * py);
            (x > 0.0 && y.abs() < radius).then(|| x - (radius * radius - y * y).sqrt())
        })
        .fold(f64::INFINITY, f64::min)
}

/// Stateful wrapper that replans periodically around standing people.
#[derive(Clone, Debug)]
pub struct Expert {
    pub params: ExpertParams,
    goal: Vec2,
    plan: FullPlan,
    last_plan: f64,
    /// Walls and obstacles inflated, one grid per fallback margin.
    base_grids: Vec<BlockedGrid>,
    fallback: FullPlan,
}

impl Expert {
    /// `fallback` is the static-map plan, used when no privileged plan exists.
    pub fn new(world: &WorldState, goal: Vec2, params: ExpertParams, fallback: FullPlan) -> Self {
        let r = world.robot.radius;
        let mut margins = vec![params.wall_margin, 0.45, r];
        margins.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let base_grids = margins
            .into_iter()
            .map(|m| {
                let mut g = BlockedGrid::inflate(&world.map, m);
                g.block_obstacles(&world.obstacles, m);
                g
            })
            .collect();
        let mut e = Self {
            params,
            goal,
            plan: fallback.clone(),
            last_plan: f64::NEG_INFINITY,
            base_grids,
            fallback,
        };
        e.replan(world);
        e
    }

    pub fn plan(&self) -> &FullPlan {
        &self.plan
    }

    fn replan(&mut self, world: &WorldState) {
        self.last_plan = world.sim_time;
        let pos = world.robot.pose.position();
        let standing: Vec<Vec2> = world.pedestrians.iter().filter(|p| is_standing(p)).map(|p| p.pos).collect();
        let person_margins = [self.params.person_margin, 0.75, 0.0];
        for base in &self.base_grids {
            for &pm in &person_margins {
                let mut g = base.clone();
                for &s in &standing {
                    if pm > 0.0 {
                        g.block_disc(s, pm);
                    }
                }
                let (Some(start), Some(goal)) = (nearest_free(&g, pos, 1.0), nearest_free(&g, self.goal, 1.0)) else {
                    continue;
                };
                if let Ok(mut plan) = plan_on_grid(&g, start, goal) {
                    if start != pos {
                        plan.waypoints.insert(0, pos);
                    }
                    if goal != self.goal {
                        plan.waypoints.push(self.goal);
                    }
                    self.plan = plan;
                    return;
                }
            }
        }
        self.plan = self.fallback.clone();
    }

    pub fn command(&mut self, world: &WorldState, scan: &LidarScan) -> Twist {
        if world.sim_time - self.last_plan >= self.params.replan_period - 1e-9 {
            self.replan(world);
        }
        expert_command(world, &self.plan, self.goal, &self.params, scan)
    }
}
