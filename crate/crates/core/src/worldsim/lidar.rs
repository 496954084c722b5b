//! Forward-facing 2D lidar simulation.
//!
//! Beams are cast against the occupancy grid (cell-exact DDA traversal),
//! analytic obstacle shapes and pedestrian discs.

use serde::{Deserialize, Serialize};

use super::geometry::{Pose2D, Vec2};
use super::map::GridMap;
use super::world::WorldState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarConfig {
    pub beams: usize,
    /// Total field of view, degrees, centered on the heading.
    pub fov_deg: f64,
    pub r_max: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            beams: 180,
            fov_deg: 240.0,
            r_max: 10.0,
        }
    }
}

impl LidarConfig {
    pub fn angle_min(&self) -> f64 {
        -self.fov_deg.to_radians() / 2.0
    }

    pub fn angle_max(&self) -> f64 {
        self.fov_deg.to_radians() / 2.0
    }

    pub fn increment(&self) -> f64 {
        if self.beams > 1 {
            self.fov_deg.to_radians() / (self.beams - 1) as f64
        } else {
            0.0
        }
    }

    /// Beam angle in the sensor frame.
    pub fn beam_angle(&self, i: usize) -> f64 {
        self.angle_min() + i as f64 * self.increment()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LidarScan {
    pub ranges: Vec<f64>,
    pub angle_min: f64,
    pub angle_max: f64,
}

impl LidarScan {
    pub fn min_range(&self) -> f64 {
        self.ranges.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Distance along `dir` (unit) from `origin` to the first occupied cell, if
/// any within `max_range`. Cells outside the grid are free.
pub fn cast_grid(map: &GridMap, origin: Vec2, dir: Vec2, max_range: f64) -> Option<f64> {
    let res = map.resolution;
    let ext = map.extent();
    let q = origin - map.origin;

    // Clip the ray to the grid rectangle.
    let mut t_enter = 0.0f64;
    let mut t_exit = max_range;
    for (o, d, hi) in [(q.x, dir.x, ext.x), (q.y, dir.y, ext.y)] {
        if d.abs() < 1e-15 {
            if o < 0.0 || o >= hi {
                return None;
            }
        } else {
            let (mut a, mut b) = ((0.0 - o) / d, (hi - o) / d);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t_enter = t_enter.max(a);
            t_exit = t_exit.min(b);
        }
    }
    if t_enter > t_exit {
        return None;
    }

    let p = q + dir * t_enter;
    let clamp_cell = |v: f64, n: usize| ((v / res).floor() as i64).clamp(0, n as i64 - 1);
    let mut ix = clamp_cell(p.x, map.width);
    let mut iy = clamp_cell(p.y, map.height);

    let step_x: i64 = if dir.x > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dir.y > 0.0 { 1 } else { -1 };
    let boundary = |i: i64, step: i64| (if step > 0 { i + 1 } else { i }) as f64 * res;
    let next_t = |o: f64, d: f64, i: i64, step: i64| {
        if d.abs() < 1e-15 {
            f64::INFINITY
        } else {
            (boundary(i, step) - o) / d
        }
    };
    let mut t_max_x = next_t(q.x, dir.x, ix, step_x);
    let mut t_max_y = next_t(q.y, dir.y, iy, step_y);
    let mut t = t_enter;
    loop {
        if t > t_exit {
            return None;
        }
        if map.is_occupied(ix, iy) {
            return Some(t);
        }
        if t_max_x < t_max_y {
            t = t_max_x;
            ix += step_x;
            t_max_x = next_t(q.x, dir.x, ix, step_x);
        } else {
            t = t_max_y;
            iy += step_y;
            t_max_y = next_t(q.y, dir.y, iy, step_y);
        }
        if !map.in_bounds(ix, iy) {
            return None;
        }
    }
}

/// Simulated scan from `sensor_pose`. The robot's own body is not seen.
pub fn raycast(world: &WorldState, sensor_pose: &Pose2D) -> LidarScan {
    let cfg = &world.config.lidar;
    let origin = sensor_pose.position();
    let r_max = cfg.r_max;
    let near_obstacles: Vec<_> = world
        .obstacles
        .iter()
        .filter(|o| o.center().dist(origin) <= r_max + o.bounding_radius())
        .collect();
    let near_peds: Vec<_> = world
        .pedestrians
        .iter()
        .filter(|p| p.pos.dist(origin) <= r_max + p.radius)
        .collect();

    let ranges = (0..cfg.beams)
        .map(|i| {
            let dir = Vec2::from_angle(sensor_pose.theta + cfg.beam_angle(i));
            let mut r = cast_grid(&world.map, origin, dir, r_max).unwrap_or(r_max);
            for o in &near_obstacles {
                if let Some(t) = o.ray_hit(origin, dir) {
                    r = r.min(t);
                }
            }
            for p in &near_peds {
                if let Some(t) = super::shapes::ray_circle(origin, dir, p.pos, p.radius) {
                    r = r.min(t);
                }
            }
            r.clamp(0.0, r_max)
        })
        .collect();
    LidarScan {
        ranges,
        angle_min: cfg.angle_min(),
        angle_max: cfg.angle_max(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beams_evenly_span_fov() {
        let c = LidarConfig::default();
        assert!((c.beam_angle(0) + 120f64.to_radians()).abs() < 1e-12);
        assert!((c.beam_angle(c.beams - 1) - 120f64.to_radians()).abs() < 1e-12);
    }

    #[test]
    fn grid_hit_along_axes_and_diagonal() {
        let mut m = GridMap::empty(0.5, 10, 10);
        m.set(6, 2, true);
        let t = cast_grid(&m, Vec2::new(0.25, 1.25), Vec2::new(1.0, 0.0), 10.0).unwrap();
        assert!((t - 2.75).abs() < 1e-12);
        let t = cast_grid(&m, Vec2::new(4.75, 1.25), Vec2::new(-1.0, 0.0), 10.0).unwrap();
        assert!((t - 1.25).abs() < 1e-12);
        assert!(cast_grid(&m, Vec2::new(0.25, 0.25), Vec2::new(0.0, 1.0), 10.0).is_none());
        let d = Vec2::new(1.0, 1.0).normalized().unwrap();
        m.set(4, 4, true);
        let t = cast_grid(&m, Vec2::new(0.25, 0.25), d, 10.0).unwrap();
        assert!((t - 1.75 * 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn ray_from_outside_grid() {
        let mut m = GridMap::empty(1.0, 4, 4);
        m.set(0, 1, true);
        let t = cast_grid(&m, Vec2::new(-3.0, 1.5), Vec2::new(1.0, 0.0), 10.0).unwrap();
        assert!((t - 3.0).abs() < 1e-12);
        assert!(cast_grid(&m, Vec2::new(-3.0, 1.5), Vec2::new(1.0, 0.0), 2.0).is_none());
    }

    #[test]
    fn origin_inside_occupied_cell_is_zero() {
        let mut m = GridMap::empty(1.0, 4, 4);
        m.set(1, 1, true);
        assert_eq!(cast_grid(&m, Vec2::new(1.5, 1.5), Vec2::new(1.0, 0.0), 10.0), Some(0.0));
    }
}
