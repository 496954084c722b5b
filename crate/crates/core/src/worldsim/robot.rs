//! Differential-drive kinematics.

use serde::{Deserialize, Serialize};

use super::geometry::{normalize_angle, Pose2D, Twist};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose2D,
    pub twist: Twist,
    pub radius: f64,
}

impl RobotState {
    pub fn new(pose: Pose2D, radius: f64) -> Self {
        assert!(radius > 0.0);
        Self {
            pose,
            twist: Twist::ZERO,
            radius,
        }
    }
}

/// Exact unicycle integration of a constant command over `dt`.
pub fn step_robot(state: &RobotState, cmd: Twist, dt: f64) -> RobotState {
    debug_assert!(dt > 0.0);
    let Pose2D { x, y, theta } = state.pose;
    let (v, w) = (cmd.v, cmd.w);
    let (nx, ny) = if w.abs() < 1e-9 {
        (x + v * dt * theta.cos(), y + v * dt * theta.sin())
    } else {
        let th1 = theta + w * dt;
        let r = v / w;
        (x + r * (th1.sin() - theta.sin()), y + r * (theta.cos() - th1.cos()))
    };
    RobotState {
        pose: Pose2D {
            x: nx,
            y: ny,
            theta: normalize_angle(theta + w * dt),
        },
        twist: cmd,
        radius: state.radius,
    }
}
