//! Seeded scenario generator. Obstacles and people are placed near the
//! static-map route so that every episode actually has to deal with them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::global_planner::{plan, plan_on_grid, BlockedGrid, FullPlan};
use crate::worldsim::{cast_grid, GridMap, Obstacle, PedestrianSpec, Pose2D, Scenario, Vec2, WorldConfig, SCENARIO_VERSION, MAX_HALF_EXTENT, MIN_HALF_EXTENT};

pub const MAX_REJECTIONS: usize = 10_000;
/// Minimum straight-line distance between robot start and goal, m.
pub const MIN_START_GOAL: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    /// Geometric obstacles.
    pub g: usize,
    /// Static people.
    pub sp: usize,
    /// Moving pedestrians.
    pub mp: usize,
}

/// A named environment condition: map plus object counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Condition {
    pub name: &'static str,
    pub map: &'static str,
    pub counts: Counts,
}

pub const CONDITIONS: [Condition; 7] = [
    Condition { name: "E1", map: "foyer", counts: Counts { g: 8, sp: 0, mp: 0 } },
    Condition { name: "E2", map: "foyer", counts: Counts { g: 12, sp: 0, mp: 0 } },
    Condition { name: "E3", map: "foyer", counts: Counts { g: 6, sp: 3, mp: 2 } },
    Condition { name: "E4", map: "foyer", counts: Counts { g: 3, sp: 2, mp: 3 } },
    Condition { name: "E5", map: "foyer", counts: Counts { g: 1, sp: 1, mp: 1 } },
    Condition { name: "E6", map: "foyer", counts: Counts { g: 8, sp: 3, mp: 3 } },
    Condition { name: "E7", map: "lab", counts: Counts { g: 8, sp: 3, mp: 3 } },
];

pub fn condition(name: &str) -> Option<Condition> {
    CONDITIONS.iter().copied().find(|c| c.name.eq_ignore_ascii_case(name))
}

#[derive(Debug, Error, PartialEq)]
pub enum GenError {
    #[error("infeasible: could not place {what} after {MAX_REJECTIONS} rejections")]
    Infeasible { what: &'static str },
}

/// Seed of scenario `i` in a batch generated from `seed`.
pub fn scenario_seed(seed: u64, i: usize) -> u64 {
    let mut z = seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Ctx<'a> {
    map: &'a GridMap,
    rng: ChaCha8Rng,
}

impl Ctx<'_> {
    fn random_point(&mut self) -> Vec2 {
        let e = self.map.extent();
        self.map.origin + Vec2::new(self.rng.gen_range(0.0..e.x), self.rng.gen_range(0.0..e.y))
    }

    fn inside(&self, p: Vec2, margin: f64) -> bool {
        let q = p - self.map.origin;
        let e = self.map.extent();
        q.x >= margin && q.y >= margin && q.x <= e.x - margin && q.y <= e.y - margin
    }

    fn wall_clearance(&self, p: Vec2, cutoff: f64) -> f64 {
        self.map.nearest_occupied(p, cutoff).map_or(cutoff, |(_, d)| d)
    }

    /// A point on the route with the unit normal there, away from both ends.
    fn route_point(&mut self, route: &FullPlan, end_margin: f64) -> (Vec2, Vec2) {
        let pts = &route.waypoints;
        let mut arc = vec![0.0; pts.len()];
        for i in 1..pts.len() {
            arc[i] = arc[i - 1] + pts[i].dist(pts[i - 1]);
        }
        let total = *arc.last().unwrap();
        let s = if total > 2.0 * end_margin {
            self.rng.gen_range(end_margin..total - end_margin)
        } else {
            total / 2.0
        };
        let i = arc.partition_point(|&a| a < s).min(pts.len() - 1);
        let a = pts[i.saturating_sub(5)];
        let b = pts[(i + 5).min(pts.len() - 1)];
        let t = (b - a).normalized().unwrap_or(Vec2::new(1.0, 0.0));
        (pts[i], Vec2::new(-t.y, t.x))
    }
}

fn route_distance(route: &FullPlan, p: Vec2) -> f64 {
    route.waypoints.iter().map(|q| q.dist(p)).fold(f64::INFINITY, f64::min)
}

/// Rejection bookkeeping: a global budget for the whole scenario and a
/// local one per layout, after which a fresh start/goal pair is drawn.
struct Budget {
    used: usize,
}

const LAYOUT_REJECTIONS: usize = 300;

impl Budget {
    fn reject(&mut self, what: &'static str) -> Result<(), GenError> {
        self.used += 1;
        if self.used > MAX_REJECTIONS {
            Err(GenError::Infeasible { what })
        } else {
            Ok(())
        }
    }
}

/// One scenario with the given counts, deterministic in `seed`.
pub fn gen_scenario(map: &GridMap, map_ref: &str, counts: Counts, seed: u64, cfg: &WorldConfig) -> Result<Scenario, GenError> {
    let mut ctx = Ctx {
        map,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut budget = Budget { used: 0 };
    let static_grid = BlockedGrid::inflate(map, cfg.robot_radius);
    loop {
        if let Some(mut s) = layout(&mut ctx, &static_grid, counts, cfg, &mut budget)? {
            s.map_ref = map_ref.to_string();
            s.seed = seed;
            return Ok(s);
        }
    }
}

fn layout(ctx: &mut Ctx, static_grid: &BlockedGrid, counts: Counts, cfg: &WorldConfig, budget: &mut Budget) -> Result<Option<Scenario>, GenError> {
    let map = ctx.map;
    let r_robot = cfg.robot_radius;
    let r_ped = cfg.pedestrian_radius;

    // Start and goal.
    let (start, goal, route) = loop {
        let s = ctx.random_point();
        let g = ctx.random_point();
        let ok = s.dist(g) >= MIN_START_GOAL
            && ctx.inside(s, 0.5)
            && ctx.inside(g, 0.5)
            && ctx.wall_clearance(s, 0.7) >= 0.7
            && ctx.wall_clearance(g, 0.7) >= 0.7;
        if ok {
            if let Ok(route) = plan_on_grid(static_grid, s, g) {
                break (s, g, route);
            }
        }
        budget.reject("robot start/goal")?;
    };
    let heading = ctx.rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let robot_start = Pose2D::new(start.x, start.y, heading);
    let clearance = |p: Vec2, obstacles: &[Obstacle], cutoff: f64| {
        obstacles.iter().map(|o| o.distance(p)).fold(ctx_wall(map, p, cutoff), f64::min)
    };

    // Geometric obstacles near the route; the route must stay open around them.
    let mut obstacles: Vec<Obstacle> = Vec::new();
    let mut local = 0;
    while obstacles.len() < counts.g {
        let (p, n) = ctx.route_point(&route, 1.5);
        let c = p + n * ctx.rng.gen_range(-1.2..1.2);
        let o = if ctx.rng.gen_bool(0.5) {
            Obstacle::cylinder(c, ctx.rng.gen_range(MIN_HALF_EXTENT..=MAX_HALF_EXTENT))
        } else {
            let yaw = ctx.rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            Obstacle::rect(
                Pose2D::new(c.x, c.y, yaw),
                ctx.rng.gen_range(MIN_HALF_EXTENT..=MAX_HALF_EXTENT),
                ctx.rng.gen_range(MIN_HALF_EXTENT..=MAX_HALF_EXTENT),
            )
        };
        let mut ok = ctx.inside(c, 0.5)
            && ctx.wall_clearance(c, o.bounding_radius() + 0.1) >= o.bounding_radius() + 0.1
            && o.distance(start) > r_robot + 0.6
            && o.distance(goal) > r_robot + 0.6
            && obstacles
                .iter()
                .all(|q| q.center().dist(c) > q.bounding_radius() + o.bounding_radius() + 0.1);
        if ok {
            obstacles.push(o);
            let mut g = static_grid.clone();
            g.block_obstacles(&obstacles, r_robot + 0.1);
            if plan_on_grid(&g, start, goal).is_err() {
                obstacles.pop();
                ok = false;
            }
        }
        if !ok {
            budget.reject("geometric obstacle")?;
            local += 1;
            if local > LAYOUT_REJECTIONS {
                return Ok(None);
            }
        }
    }

    // Static people near the route.
    let mut peds: Vec<PedestrianSpec> = Vec::new();
    let mut local = 0;
    while peds.len() < counts.sp {
        let (p, n) = ctx.route_point(&route, 1.5);
        let c = p + n * ctx.rng.gen_range(-1.5..1.5);
        let mut ok = ctx.inside(c, 0.4)
            && clearance(c, &obstacles, 0.5) >= r_ped + 0.2
            && c.dist(start) > 1.5
            && c.dist(goal) > 1.5
            && peds.iter().all(|q| q.start.position().dist(c) > 0.8);
        if ok {
            peds.push(PedestrianSpec {
                start: Pose2D::new(c.x, c.y, ctx.rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)),
                subgoals: vec![],
                desired_speed: 0.0,
            });
            let mut g = static_grid.clone();
            g.block_obstacles(&obstacles, r_robot + 0.1);
            for q in &peds {
                g.block_disc(q.start.position(), r_robot + r_ped + 0.1);
            }
            if plan_on_grid(&g, start, goal).is_err() {
                peds.pop();
                ok = false;
            }
        }
        if !ok {
            budget.reject("static person")?;
            local += 1;
            if local > LAYOUT_REJECTIONS {
                return Ok(None);
            }
        }
    }

    // Moving pedestrians, mostly crossing the route back and forth.
    let los = |a: Vec2, b: Vec2| match (b - a).normalized() {
        Some(d) => cast_grid(map, a, d, a.dist(b)).is_none(),
        None => true,
    };
    let occupied = |c: Vec2, peds: &[PedestrianSpec]| peds.iter().any(|q| q.start.position().dist(c) < 0.8);
    let mut moving = 0;
    let mut local = 0;
    while moving < counts.mp {
        if local > LAYOUT_REJECTIONS {
            return Ok(None);
        }
        let (p, n) = ctx.route_point(&route, 1.0);
        let side = if ctx.rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let s = p + n * (side * ctx.rng.gen_range(1.5..5.0));
        let spot_ok = |c: Vec2, ctx: &Ctx| ctx.inside(c, 0.4) && clearance(c, &obstacles, 0.6) >= r_ped + 0.3;
        if !spot_ok(s, ctx) || s.dist(start) < 2.0 || occupied(s, &peds) {
            budget.reject("moving pedestrian")?;
            local += 1;
            continue;
        }
        let k = ctx.rng.gen_range(2..=4);
        let mut subgoals = Vec::with_capacity(k);
        let mut prev = s;
        let mut sign = -side;
        while subgoals.len() < k {
            let (p, n) = ctx.route_point(&route, 0.5);
            let flip = if ctx.rng.gen_bool(0.75) { 1.0 } else { -1.0 };
            let q = p + n * (sign * flip * ctx.rng.gen_range(1.5..5.0));
            let last = subgoals.len() + 1 == k;
            let ok = spot_ok(q, ctx)
                && q.dist(prev) >= 2.0
                && los(prev, q)
                && q.dist(goal) > 1.5
                && (!last || (route_distance(&route, q) > 1.0 && q.dist(start) > 1.5 && !occupied(q, &peds)));
            if ok {
                subgoals.push(q);
                prev = q;
                sign = -sign * flip;
            } else {
                budget.reject("moving pedestrian")?;
                local += 1;
                if local > LAYOUT_REJECTIONS {
                    return Ok(None);
                }
            }
        }
        let heading = (subgoals[0] - s).angle();
        peds.push(PedestrianSpec {
            start: Pose2D::new(s.x, s.y, heading),
            subgoals,
            desired_speed: ctx.rng.gen_range(0.6..1.2),
        });
        moving += 1;
    }

    Ok(Some(Scenario {
        v: SCENARIO_VERSION,
        map_ref: String::new(),
        robot_start,
        goal,
        obstacles,
        pedestrians: peds,
        seed: 0,
        condition: None,
        sf_params: None,
    }))
}

fn ctx_wall(map: &GridMap, p: Vec2, cutoff: f64) -> f64 {
    map.nearest_occupied(p, cutoff).map_or(cutoff, |(_, d)| d)
}

/// `n` scenarios for a condition, deterministic in `seed`.
pub fn gen_scenarios(map: &GridMap, cond: &Condition, n: usize, seed: u64, cfg: &WorldConfig) -> Result<Vec<Scenario>, GenError> {
    (0..n)
        .map(|i| {
            let mut s = gen_scenario(map, cond.map, cond.counts, scenario_seed(seed, i), cfg)?;
            s.condition = Some(cond.name.to_string());
            Ok(s)
        })
        .collect()
}

/// Static-map route of a scenario, inflated by one robot radius.
pub fn static_route(map: &GridMap, s: &Scenario, cfg: &WorldConfig) -> Option<FullPlan> {
    plan(map, s.robot_start.position(), s.goal, cfg.robot_radius).ok()
}
