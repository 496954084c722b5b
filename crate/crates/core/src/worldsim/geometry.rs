//! Planar geometry primitives: points, poses, twists and frame changes.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// Absolute linear speed limit of the platform, m/s.
pub const MAX_LINEAR: f64 = 0.6;
/// Absolute angular speed limit of the platform, rad/s.
pub const MAX_ANGULAR: f64 = 1.2;

/// Wraps an angle into (-π, π].
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Unit vector in the same direction, or `None` for (near-)zero vectors.
    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 1e-12).then(|| self * (1.0 / n))
    }

    pub fn rotate(self, theta: f64) -> Vec2 {
        let (s, c) = theta.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A planar pose. `theta` is kept in (-π, π] by every constructor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::from_angle(self.theta)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// Expresses a world point in this pose's frame.
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.position()).rotate(-self.theta)
    }

    /// Maps a point given in this pose's frame back to the world.
    pub fn to_world(&self, p: Vec2) -> Vec2 {
        p.rotate(self.theta) + self.position()
    }

    /// `other` expressed relative to this pose.
    pub fn relative(&self, other: &Pose2D) -> Pose2D {
        let p = self.to_local(other.position());
        Pose2D::new(p.x, p.y, other.theta - self.theta)
    }

    /// Composes a pose given in this frame onto this pose.
    pub fn compose(&self, local: &Pose2D) -> Pose2D {
        let p = self.to_world(local.position());
        Pose2D::new(p.x, p.y, self.theta + local.theta)
    }
}

/// Transforms world points into the robot frame: translate, then rotate by -θ.
pub fn to_robot_frame(robot_pose: &Pose2D, world_points: &[Vec2]) -> Vec<Vec2> {
    world_points.iter().map(|&p| robot_pose.to_local(p)).collect()
}

/// Inverse of [`to_robot_frame`].
pub fn to_world_frame(robot_pose: &Pose2D, local_points: &[Vec2]) -> Vec<Vec2> {
    local_points.iter().map(|&p| robot_pose.to_world(p)).collect()
}

/// Linear and angular velocity of a differential-drive base.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub v: f64,
    pub w: f64,
}

impl Twist {
    pub const ZERO: Twist = Twist { v: 0.0, w: 0.0 };

    pub const fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }

    /// Saturates to the platform limits. Non-finite components become zero.
    pub fn clamped(self) -> Twist {
        let sat = |x: f64, lim: f64| if x.is_finite() { x.clamp(-lim, lim) } else { 0.0 };
        Twist::new(sat(self.v, MAX_LINEAR), sat(self.w, MAX_ANGULAR))
    }

    pub fn within_limits(&self) -> bool {
        self.v.abs() <= MAX_LINEAR + 1e-12 && self.w.abs() <= MAX_ANGULAR + 1e-12
    }
}
