//! Helpers shared by the gradient checks and the acceptance gate.
#![allow(dead_code)]

use rand::Rng;
use socnav::eval::episode::{EpisodeLog, Outcome, Tick};
use socnav::global_planner::BlockedGrid;
use socnav::nn::{ParamStore, Tensor};
use socnav::worldsim::{Pose2D, Twist, Vec2};
use socnav::policy::{PolicyArch, PolicyInput, PLAN_LEN};

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-5;

pub fn random_input(arch: &PolicyArch, people: usize, rng: &mut impl Rng) -> PolicyInput {
    PolicyInput {
        plan: (0..PLAN_LEN).map(|_| rng.gen_range(-5.0..5.0)).collect(),
        lidar: (0..arch.beams).map(|_| rng.gen_range(0.0..1.0)).collect(),
        odom: [rng.gen_range(-0.6..0.6), rng.gen_range(-1.2..1.2)],
        humans: (0..people).map(|_| (0..2 * arch.history_k).map(|_| rng.gen_range(-6.0..6.0)).collect()).collect(),
    }
}

pub fn weights(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::new(&[rows, cols], (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Zero biases put empty pedestrian sets exactly on a ReLU kink; check at a
/// generic point instead.
pub fn randomize_biases(store: &mut ParamStore, rng: &mut impl Rng) {
    for id in store.ids().collect::<Vec<_>>() {
        if store.name(id).ends_with(".b") {
            store.get_mut(id).data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-0.1..0.1));
        }
    }
}

/// Mixed relative/absolute error; gradients below the float noise floor
/// compare absolutely.
pub fn err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-4);
    (analytic - numeric).abs() / scale
}

/// Central difference, refined with a Richardson step when the first
/// estimate straddles a ReLU or max-pool switch.
pub fn central(f: &dyn Fn(f64) -> f64) -> f64 {
    let d1 = (f(H) - f(-H)) / (2.0 * H);
    let d2 = (f(H / 2.0) - f(-H / 2.0)) / H;
    (4.0 * d2 - d1) / 3.0
}

/// Error of `analytic` against a finite difference of `f` at 0. A probe that
/// misses the tolerance and whose one-sided quotients disagree sits on a
/// ReLU or max-pool switch, where no derivative exists; it yields `None`.
pub fn fd_error(analytic: f64, f: &dyn Fn(f64) -> f64) -> Option<f64> {
    let e = err(analytic, central(f));
    if e < TOL {
        return Some(e);
    }
    let f0 = f(0.0);
    let (up, down) = ((f(H) - f0) / H, (f0 - f(-H)) / H);
    let scale = up.abs().max(down.abs()).max(1e-4);
    ((up - down).abs() <= 1e-3 * scale).then_some(e)
}

/// Largest error over `want` differentiable probes of each parameter tensor,
/// and the number of probes redrawn because they fell on a switch.
pub fn spot_check(
    store: &ParamStore,
    grads: &socnav::nn::Grads,
    want: usize,
    rng: &mut impl Rng,
    loss_at: &dyn Fn(socnav::nn::ParamId, usize, f64) -> f64,
) -> (f64, String, usize, usize) {
    let (mut worst, mut at, mut probes, mut skipped) = (0.0, String::new(), 0, 0);
    for id in store.ids().collect::<Vec<_>>() {
        let n = store.get(id).len();
        let mut got = 0;
        for _ in 0..want + 20 {
            if got == want {
                break;
            }
            let i = rng.gen_range(0..n);
            match fd_error(grads.get(id).data()[i], &|d| loss_at(id, i, d)) {
                Some(e) => {
                    got += 1;
                    if e > worst {
                        (worst, at) = (e, format!("{}[{i}]", store.name(id)));
                    }
                }
                None => skipped += 1,
            }
        }
        assert_eq!(got, want, "{}: no differentiable probe found", store.name(id));
        probes += got;
    }
    (worst, at, probes, skipped)
}

/// Worst error over every entry of `x` of the analytic gradient `g` of `f`.
pub fn tensor_check(x: &Tensor, g: &Tensor, f: impl Fn(&Tensor) -> f64) -> f64 {
    (0..x.len())
        .map(|i| {
            let probe = |d: f64| {
                let mut p = x.clone();
                p.data_mut()[i] += d;
                f(&p)
            };
            err(g.data()[i], central(&probe))
        })
        .fold(0.0, f64::max)
}

/// Relaxes every edge until nothing changes.
pub fn bellman_ford(grid: &BlockedGrid, s: usize) -> Vec<f64> {
    let n = grid.width * grid.height;
    let mut dist = vec![f64::INFINITY; n];
    dist[s] = 0.0;
    for _ in 0..n {
        let mut changed = false;
        for u in 0..n {
            if !dist[u].is_finite() {
                continue;
            }
            for (v, w) in grid.edges(u) {
                if dist[u] + w < dist[v] {
                    dist[v] = dist[u] + w;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist
}

pub fn tick(t: f64, x: f64, v: f64, min_ped: f64) -> Tick {
    Tick {
        t,
        pose: Pose2D::new(x, 0.0, 0.0),
        cmd: Twist { v, w: 0.0 },
        min_range: 5.0,
        min_ped,
        goal_dist: 10.0 - x,
        a: None,
        b: None,
        plan: None,
    }
}

pub fn log(name: &str, outcome: Outcome, ticks: Vec<Tick>) -> EpisodeLog {
    EpisodeLog {
        scenario: name.into(),
        condition: "E4".into(),
        policy: "proposed".into(),
        robot_radius: 0.35,
        control_period: 0.1,
        goal: Vec2::new(10.0, 0.0),
        duration: ticks.last().unwrap().t,
        ticks,
        outcome,
    }
}

/// Person distance over 6 s: close at 1.0–1.5 s and again at 3.0–3.2 s,
/// inside the personal zone from 0.8 s to 3.5 s without a break.
pub fn encounter() -> Vec<Tick> {
    (0..=60)
        .map(|i| {
            let t = i as f64 * 0.1;
            let d = if (1.0..1.55).contains(&t) || (3.0..3.25).contains(&t) {
                0.4
            } else if (0.8..3.55).contains(&t) {
                1.0
            } else {
                3.0
            };
            tick(t, 0.5 * t, 0.5, d)
        })
        .collect()
}

