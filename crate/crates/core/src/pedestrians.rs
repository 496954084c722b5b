//! Social-forces crowd model.
//!
//! Every moving pedestrian relaxes toward its desired velocity (pointing at
//! the current subgoal) and is pushed away from other pedestrians, the robot,
//! and the nearest point of each static obstacle by an exponential repulsion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::worldsim::{Vec2, WorldState};

#[derive(Debug, Error, PartialEq)]
pub enum SocialForceError {
    #[error("social force parameter `{0}` must be strictly positive")]
    NonPositive(&'static str),
    #[error("max_speed must be at least desired_speed_default")]
    SpeedOrder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SocialForceParams {
    /// Relaxation time, s.
    pub tau: f64,
    /// Repulsion strength, m/s².
    #[serde(rename = "A")]
    pub a: f64,
    /// Repulsion range, m.
    #[serde(rename = "B")]
    pub b: f64,
    pub desired_speed_default: f64,
    pub max_speed: f64,
    pub subgoal_radius: f64,
    /// Static obstacles farther than this do not push.
    pub obstacle_cutoff: f64,
}

impl Default for SocialForceParams {
    fn default() -> Self {
        Self {
            tau: 0.5,
            a: 2.0,
            b: 0.3,
            desired_speed_default: 1.2,
            max_speed: 1.8,
            subgoal_radius: 0.4,
            obstacle_cutoff: 3.0,
        }
    }
}

impl SocialForceParams {
    pub fn validate(&self) -> Result<(), SocialForceError> {
        for (name, v) in [
            ("tau", self.tau),
            ("A", self.a),
            ("B", self.b),
            ("desired_speed_default", self.desired_speed_default),
            ("max_speed", self.max_speed),
            ("subgoal_radius", self.subgoal_radius),
            ("obstacle_cutoff", self.obstacle_cutoff),
        ] {
            if !(v > 0.0) {
                return Err(SocialForceError::NonPositive(name));
            }
        }
        if self.max_speed < self.desired_speed_default {
            return Err(SocialForceError::SpeedOrder);
        }
        Ok(())
    }
}

/// A repelling body as seen by one pedestrian. Obstacle points have radius 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub pos: Vec2,
    pub radius: f64,
}

/// The kinematic part of a pedestrian that the force law needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Agent {
    pub pos: Vec2,
    pub vel: Vec2,
    pub radius: f64,
    pub desired_speed: f64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed-deterministic unit vector used to separate coincident bodies.
pub fn jitter_direction(seed: u64, ped: usize, neighbor: usize, step: u64) -> Vec2 {
    let mut h = splitmix64(seed);
    for x in [ped as u64, neighbor as u64, step] {
        h = splitmix64(h ^ x);
    }
    let angle = (h >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU;
    Vec2::from_angle(angle)
}

/// Total social force (acceleration) on `agent`.
///
/// `jitter(j)` supplies the push direction for neighbor `j` when the centers
/// coincide (closer than 1e-6 m).
pub fn social_force(
    agent: &Agent,
    neighbors: &[Neighbor],
    subgoal: Option<Vec2>,
    params: &SocialForceParams,
    jitter: impl Fn(usize) -> Vec2,
) -> Vec2 {
    let desired = subgoal
        .and_then(|g| (g - agent.pos).normalized())
        .map_or(Vec2::ZERO, |e| e * agent.desired_speed);
    let mut f = (desired - agent.vel) * (1.0 / params.tau);
    for (j, n) in neighbors.iter().enumerate() {
        let delta = agent.pos - n.pos;
        let d = delta.norm();
        let away = if d < 1e-6 { jitter(j) } else { delta * (1.0 / d) };
        let r = agent.radius + n.radius;
        f += away * (params.a * ((r - d) / params.b).exp());
    }
    f
}

/// Advances every pedestrian by `dt` with semi-implicit Euler.
///
/// Forces are computed from the state at the start of the step and applied
/// synchronously. Pedestrians without remaining subgoals stand still.
pub fn step_pedestrians(world: &mut WorldState, params: &SocialForceParams, dt: f64) {
    debug_assert!(dt > 0.0);
    let n = world.pedestrians.len();

    for p in world.pedestrians.iter_mut() {
        while let Some(g) = p.current_subgoal() {
            if g.dist(p.pos) <= params.subgoal_radius {
                p.next_subgoal += 1;
            } else {
                break;
            }
        }
    }

    let mut forces = Vec::with_capacity(n);
    let mut neighbors = Vec::with_capacity(n + world.obstacles.len() + 2);
    for i in 0..n {
        let p = &world.pedestrians[i];
        if p.is_static() {
            forces.push(None);
            continue;
        }
        neighbors.clear();
        for (j, q) in world.pedestrians.iter().enumerate() {
            if j != i {
                neighbors.push(Neighbor {
                    pos: q.pos,
                    radius: q.radius,
                });
            }
        }
        neighbors.push(Neighbor {
            pos: world.robot.pose.position(),
            radius: world.robot.radius,
        });
        if let Some((pt, _)) = world.map.nearest_occupied(p.pos, params.obstacle_cutoff) {
            neighbors.push(Neighbor { pos: pt, radius: 0.0 });
        }
        for o in &world.obstacles {
            let pt = o.nearest_point(p.pos);
            if pt.dist(p.pos) <= params.obstacle_cutoff {
                neighbors.push(Neighbor { pos: pt, radius: 0.0 });
            }
        }
        let agent = Agent {
            pos: p.pos,
            vel: p.vel,
            radius: p.radius,
            desired_speed: p.desired_speed,
        };
        let (seed, step) = (world.seed, world.steps);
        forces.push(Some(social_force(
            &agent,
            &neighbors,
            p.current_subgoal(),
            params,
            |j| jitter_direction(seed, i, j, step),
        )));
    }

    for (p, f) in world.pedestrians.iter_mut().zip(forces) {
        match f {
            None => p.vel = Vec2::ZERO,
            Some(f) => {
                p.vel += f * dt;
                let s = p.vel.norm();
                if s > params.max_speed {
                    p.vel = p.vel * (params.max_speed / s);
                }
                p.pos += p.vel * dt;
            }
        }
    }
}
