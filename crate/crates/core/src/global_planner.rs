//! Dijkstra planning on the occupancy grid and the 10-waypoint plan summary.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::worldsim::{GridMap, Obstacle, Pose2D, Vec2};

/// Number of waypoints in a downsampled plan.
pub const PLAN_POINTS: usize = 10;
/// Minimum spacing between consecutive downsampled waypoints, m.
pub const PLAN_SPACING: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("{0} lies outside the map")]
    OutOfBounds(&'static str),
    #[error("blocked-endpoint: {0} is occupied after inflation")]
    BlockedEndpoint(&'static str),
    #[error("unreachable: no path between start and goal")]
    Unreachable,
}

/// Traversability grid derived from a map (after inflation).
#[derive(Clone, Debug, PartialEq)]
pub struct BlockedGrid {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: Vec2,
    pub blocked: Vec<bool>,
}

impl BlockedGrid {
    /// Blocks every cell whose center lies within `radius` of an occupied cell center.
    pub fn inflate(map: &GridMap, radius: f64) -> Self {
        let (w, h) = (map.width, map.height);
        let mut blocked = map.cells.clone();
        let reach = (radius / map.resolution).floor() as i64;
        let r2 = (radius / map.resolution).powi(2) + 1e-9;
        let offsets: Vec<(i64, i64)> = (-reach..=reach)
            .flat_map(|dy| (-reach..=reach).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| (dx * dx + dy * dy) as f64 <= r2)
            .collect();
        for iy in 0..h {
            for ix in 0..w {
                if !map.cells[iy * w + ix] {
                    continue;
                }
                for &(dx, dy) in &offsets {
                    let (x, y) = (ix as i64 + dx, iy as i64 + dy);
                    if map.in_bounds(x, y) {
                        blocked[y as usize * w + x as usize] = true;
                    }
                }
            }
        }
        Self {
            width: w,
            height: h,
            resolution: map.resolution,
            origin: map.origin,
            blocked,
        }
    }

    /// Additionally blocks cells whose centers are within `radius` of an obstacle.
    pub fn block_obstacles(&mut self, obstacles: &[Obstacle], radius: f64) {
        for o in obstacles {
            self.block_where(o.center(), o.bounding_radius() + radius, |p| o.distance(p) <= radius);
        }
    }

    /// Additionally blocks cells whose centers are within `radius` of `center`.
    pub fn block_disc(&mut self, center: Vec2, radius: f64) {
        self.block_where(center, radius, |p| p.dist(center) <= radius);
    }

    fn block_where(&mut self, center: Vec2, reach: f64, pred: impl Fn(Vec2) -> bool) {
        let (cx, cy) = self.cell_of(center);
        let n = (reach / self.resolution).ceil() as i64 + 1;
        for y in cy - n..=cy + n {
            for x in cx - n..=cx + n {
                if self.in_bounds(x, y) && pred(self.center(x as usize, y as usize)) {
                    self.blocked[y as usize * self.width + x as usize] = true;
                }
            }
        }
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    pub fn cell_of(&self, p: Vec2) -> (i64, i64) {
        let q = p - self.origin;
        (
            (q.x / self.resolution).floor() as i64,
            (q.y / self.resolution).floor() as i64,
        )
    }

    pub fn center(&self, ix: usize, iy: usize) -> Vec2 {
        self.origin
            + Vec2::new(
                (ix as f64 + 0.5) * self.resolution,
                (iy as f64 + 0.5) * self.resolution,
            )
    }

    pub fn is_free(&self, x: i64, y: i64) -> bool {
        self.in_bounds(x, y) && !self.blocked[y as usize * self.width + x as usize]
    }

    /// Traversable moves out of cell `idx` with their costs. Diagonal moves
    /// require both adjacent orthogonal cells to be free (no corner cutting).
    pub fn edges(&self, idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (x, y) = ((idx % self.width) as i64, (idx / self.width) as i64);
        let straight = self.resolution;
        let diagonal = self.resolution * std::f64::consts::SQRT_2;
        const MOVES: [(i64, i64); 8] = [
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ];
        MOVES.iter().filter_map(move |&(dx, dy)| {
            let (nx, ny) = (x + dx, y + dy);
            if !self.is_free(nx, ny) {
                return None;
            }
            if dx != 0 && dy != 0 {
                if !self.is_free(x + dx, y) || !self.is_free(x, y + dy) {
                    return None;
                }
                Some((ny as usize * self.width + nx as usize, diagonal))
            } else {
                Some((ny as usize * self.width + nx as usize, straight))
            }
        })
    }
}

/// Minimum-cost path through cell centers.
#[derive(Clone, Debug, PartialEq)]
pub struct FullPlan {
    pub waypoints: Vec<Vec2>,
    pub cost: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct QueueItem {
    cost: f64,
    idx: usize,
}

impl Eq for QueueItem {}

impl Ord for QueueItem {
    // Reversed for a min-heap; ties go to the lower row-major index.
    fn cmp(&self, o: &Self) -> Ordering {
        o.cost
            .total_cmp(&self.cost)
            .then_with(|| o.idx.cmp(&self.idx))
    }
}

impl PartialOrd for QueueItem {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Plans on the static map after inflating occupied cells by `inflation` meters.
pub fn plan(map: &GridMap, start: Vec2, goal: Vec2, inflation: f64) -> Result<FullPlan, PlanError> {
    plan_on_grid(&BlockedGrid::inflate(map, inflation), start, goal)
}

/// Dijkstra over an already-built traversability grid.
pub fn plan_on_grid(grid: &BlockedGrid, start: Vec2, goal: Vec2) -> Result<FullPlan, PlanError> {
    let (sx, sy) = grid.cell_of(start);
    let (gx, gy) = grid.cell_of(goal);
    if !grid.in_bounds(sx, sy) {
        return Err(PlanError::OutOfBounds("start"));
    }
    if !grid.in_bounds(gx, gy) {
        return Err(PlanError::OutOfBounds("goal"));
    }
    if !grid.is_free(sx, sy) {
        return Err(PlanError::BlockedEndpoint("start"));
    }
    if !grid.is_free(gx, gy) {
        return Err(PlanError::BlockedEndpoint("goal"));
    }
    let s = sy as usize * grid.width + sx as usize;
    let g = gy as usize * grid.width + gx as usize;

    let n = grid.width * grid.height;
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    heap.push(QueueItem { cost: 0.0, idx: s });
    while let Some(QueueItem { cost, idx }) = heap.pop() {
        if done[idx] {
            continue;
        }
        done[idx] = true;
        if idx == g {
            break;
        }
        for (nb, w) in grid.edges(idx) {
            let c = cost + w;
            if c < dist[nb] {
                dist[nb] = c;
                parent[nb] = idx;
                heap.push(QueueItem { cost: c, idx: nb });
            }
        }
    }
    if !dist[g].is_finite() {
        return Err(PlanError::Unreachable);
    }
    let mut cells = vec![g];
    while *cells.last().unwrap() != s {
        cells.push(parent[*cells.last().unwrap()]);
    }
    cells.reverse();
    Ok(FullPlan {
        waypoints: cells
            .into_iter()
            .map(|i| grid.center(i % grid.width, i / grid.width))
            .collect(),
        cost: dist[g],
    })
}

/// Center of the free cell nearest to `p` within `max_dist`, if any.
pub fn nearest_free(grid: &BlockedGrid, p: Vec2, max_dist: f64) -> Option<Vec2> {
    let (cx, cy) = grid.cell_of(p);
    if grid.is_free(cx, cy) {
        return Some(p);
    }
    let n = (max_dist / grid.resolution).ceil() as i64;
    let mut best: Option<(f64, Vec2)> = None;
    for y in cy - n..=cy + n {
        for x in cx - n..=cx + n {
            if grid.is_free(x, y) {
                let c = grid.center(x as usize, y as usize);
                let d = c.dist(p);
                if d <= max_dist && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, c));
                }
            }
        }
    }
    best.map(|(_, c)| c)
}

/// Index of the plan point closest to `p`; ties resolve to the lower index.
pub fn nearest_index(points: &[Vec2], p: Vec2) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, q) in points.iter().enumerate() {
        let d = q.dist(p);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Point `distance` meters of arc length ahead of the nearest plan point, or
/// the goal once the robot is within `distance` of it or the plan runs out.
pub fn point_ahead(full: &FullPlan, robot: Vec2, goal: Vec2, distance: f64) -> Vec2 {
    if robot.dist(goal) < distance || full.waypoints.is_empty() {
        return goal;
    }
    let pts = &full.waypoints;
    let mut i = nearest_index(pts, robot);
    let mut acc = 0.0;
    while i + 1 < pts.len() {
        acc += pts[i].dist(pts[i + 1]);
        i += 1;
        if acc >= distance {
            return pts[i];
        }
    }
    goal
}

/// The ten-waypoint summary of the route ahead.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DownsampledPlan {
    pub waypoints: [Vec2; PLAN_POINTS],
}

impl DownsampledPlan {
    /// Flattened (x, y) pairs expressed in the frame of `pose`.
    pub fn to_frame(&self, pose: &Pose2D) -> [f64; 2 * PLAN_POINTS] {
        let mut out = [0.0; 2 * PLAN_POINTS];
        for (i, w) in self.waypoints.iter().enumerate() {
            let l = pose.to_local(*w);
            out[2 * i] = l.x;
            out[2 * i + 1] = l.y;
        }
        out
    }
}

/// Starts at the plan point nearest the robot and keeps later points spaced
/// at least 0.5 m apart, padding with the goal to exactly ten waypoints.
pub fn downsample(full: &FullPlan, robot_pose: &Pose2D, goal: Vec2) -> DownsampledPlan {
    assert!(!full.waypoints.is_empty(), "downsample needs a non-empty plan");
    let pts = &full.waypoints;
    let start = nearest_index(pts, robot_pose.position());
    let mut waypoints = [goal; PLAN_POINTS];
    waypoints[0] = pts[start];
    let mut n = 1;
    let mut last = pts[start];
    for &p in &pts[start + 1..] {
        if n == PLAN_POINTS {
            break;
        }
        if p.dist(last) >= PLAN_SPACING {
            waypoints[n] = p;
            last = p;
            n += 1;
        }
    }
    DownsampledPlan { waypoints }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_cell_is_trivial() {
        let m = GridMap::empty(0.1, 20, 20);
        let p = plan(&m, Vec2::new(1.02, 1.03), Vec2::new(1.07, 1.01), 0.0).unwrap();
        assert_eq!(p.waypoints.len(), 1);
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn empty_map_diagonal() {
        let m = GridMap::empty(0.1, 20, 20);
        let p = plan(&m, Vec2::new(0.05, 0.05), Vec2::new(1.95, 1.95), 0.0).unwrap();
        assert!((p.cost - 19.0 * 0.1 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(p.waypoints.len(), 20);
    }

    #[test]
    fn endpoint_errors() {
        let mut m = GridMap::empty(0.1, 20, 20);
        m.set(10, 10, true);
        assert_eq!(
            plan(&m, Vec2::new(1.05, 1.05), Vec2::new(0.2, 0.2), 0.0),
            Err(PlanError::BlockedEndpoint("start"))
        );
        assert_eq!(
            plan(&m, Vec2::new(0.2, 0.2), Vec2::new(1.12, 1.05), 0.15),
            Err(PlanError::BlockedEndpoint("goal"))
        );
        for x in 0..20 {
            m.set(x, 5, true);
        }
        assert_eq!(
            plan(&m, Vec2::new(0.2, 0.2), Vec2::new(1.5, 1.5), 0.0),
            Err(PlanError::Unreachable)
        );
        assert_eq!(
            plan(&m, Vec2::new(-0.2, 0.2), Vec2::new(1.5, 1.5), 0.0),
            Err(PlanError::OutOfBounds("start"))
        );
    }

    #[test]
    fn inflation_disc() {
        let mut m = GridMap::empty(0.1, 21, 21);
        m.set(10, 10, true);
        let g = BlockedGrid::inflate(&m, 0.35);
        // 3.5-cell radius: (3,1) is inside (sqrt 10 < 3.5), (3,2) is not (sqrt 13 > 3.5).
        assert!(!g.is_free(13, 11));
        assert!(g.is_free(13, 12));
        assert!(g.is_free(14, 10));
    }

    #[test]
    fn full_padding_at_goal() {
        let goal = Vec2::new(3.0, 4.0);
        let full = FullPlan {
            waypoints: vec![goal],
            cost: 0.0,
        };
        let d = downsample(&full, &Pose2D::new(3.0, 4.0, 0.0), goal);
        assert!(d.waypoints.iter().all(|w| *w == goal));
    }

    fn straight_plan() -> FullPlan {
        FullPlan {
            waypoints: (0..=100).map(|i| Vec2::new(i as f64 * 0.1, 0.0)).collect(),
            cost: 10.0,
        }
    }

    #[test]
    fn straight_plan_spacing() {
        let goal = Vec2::new(10.0, 0.0);
        let d = downsample(&straight_plan(), &Pose2D::default(), goal);
        assert_eq!(d.waypoints[0], Vec2::ZERO);
        for w in d.waypoints.windows(2) {
            let gap = w[0].dist(w[1]);
            assert!(gap >= PLAN_SPACING, "gap {gap}");
            assert!(gap < PLAN_SPACING + 0.1 + 1e-9);
        }
        assert!((d.waypoints[9].x - 4.5).abs() < 0.1);
    }

    #[test]
    fn starts_at_nearest_point() {
        let goal = Vec2::new(10.0, 0.0);
        let d = downsample(&straight_plan(), &Pose2D::new(6.5, 1.0, 0.0), goal);
        assert!((d.waypoints[0].x - 6.5).abs() < 1e-12);
        // At most 8 spaced points fit in the remaining 3.5 m; the rest is padding.
        assert_eq!(d.waypoints[9], goal);
    }

    #[test]
    fn point_ahead_walks_arc_length() {
        let goal = Vec2::new(10.0, 0.0);
        let p = point_ahead(&straight_plan(), Vec2::new(1.0, 0.5), goal, 2.0);
        assert!((p.x - 3.0).abs() < 1e-9);
        assert_eq!(point_ahead(&straight_plan(), Vec2::new(8.5, 0.0), goal, 2.0), goal);
    }
}
