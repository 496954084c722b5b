//! Analytic obstacle shapes placed on top of the static map.

use serde::{Deserialize, Serialize};

use super::geometry::{Pose2D, Vec2};

/// Default half-extent range of generated obstacles (0.5–0.75 m footprints).
pub const MIN_HALF_EXTENT: f64 = 0.25;
pub const MAX_HALF_EXTENT: f64 = 0.375;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Box { half_x: f64, half_y: f64 },
    Cylinder { radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub shape: Shape,
    pub pose: Pose2D,
}

/// Entry distance of a ray into a circle; 0 when the origin is inside.
pub fn ray_circle(origin: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let oc = origin - center;
    let c = oc.norm_sq() - radius * radius;
    if c <= 0.0 {
        return Some(0.0);
    }
    let b = oc.dot(dir);
    if b >= 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    // Numerically stable smaller root of t^2 + 2bt + c = 0 with b < 0.
    let q = -b + disc.sqrt();
    Some(c / q)
}

impl Obstacle {
    pub fn cylinder(center: Vec2, radius: f64) -> Self {
        Self {
            shape: Shape::Cylinder { radius },
            pose: Pose2D::new(center.x, center.y, 0.0),
        }
    }

    pub fn rect(pose: Pose2D, half_x: f64, half_y: f64) -> Self {
        Self {
            shape: Shape::Box { half_x, half_y },
            pose,
        }
    }

    pub fn center(&self) -> Vec2 {
        self.pose.position()
    }

    /// Radius of the smallest centered disc enclosing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match self.shape {
            Shape::Box { half_x, half_y } => half_x.hypot(half_y),
            Shape::Cylinder { radius } => radius,
        }
    }

    /// Closest point of the (solid) shape to `p`; `p` itself when inside.
    pub fn nearest_point(&self, p: Vec2) -> Vec2 {
        match self.shape {
            Shape::Cylinder { radius } => {
                let d = p - self.center();
                let n = d.norm();
                if n <= radius {
                    p
                } else {
                    self.center() + d * (radius / n)
                }
            }
            Shape::Box { half_x, half_y } => {
                let l = self.pose.to_local(p);
                let c = Vec2::new(l.x.clamp(-half_x, half_x), l.y.clamp(-half_y, half_y));
                if c == l {
                    p
                } else {
                    self.pose.to_world(c)
                }
            }
        }
    }

    pub fn distance(&self, p: Vec2) -> f64 {
        self.nearest_point(p).dist(p)
    }

    /// Distance along the unit direction `dir` at which the ray enters the shape.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        match self.shape {
            Shape::Cylinder { radius } => ray_circle(origin, dir, self.center(), radius),
            Shape::Box { half_x, half_y } => {
                let o = self.pose.to_local(origin);
                let d = dir.rotate(-self.pose.theta);
                let mut t0 = 0.0f64;
                let mut t1 = f64::INFINITY;
                for (oc, dc, h) in [(o.x, d.x, half_x), (o.y, d.y, half_y)] {
                    if dc.abs() < 1e-15 {
                        if oc.abs() > h {
                            return None;
                        }
                    } else {
                        let inv = 1.0 / dc;
                        let (mut a, mut b) = ((-h - oc) * inv, (h - oc) * inv);
                        if a > b {
                            std::mem::swap(&mut a, &mut b);
                        }
                        t0 = t0.max(a);
                        t1 = t1.min(b);
                        if t0 > t1 {
                            return None;
                        }
                    }
                }
                Some(t0)
            }
        }
    }
}
