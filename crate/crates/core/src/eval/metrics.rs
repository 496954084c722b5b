//! Objective metrics over episode logs.

use serde::{Deserialize, Serialize};

use super::episode::{EpisodeLog, Outcome, Tick};

/// Near collision: an obstacle closer than this to the robot body, m.
pub const NEAR_COLLISION: f64 = 0.3;
/// Pedestrian collision: robot–pedestrian center distance below this, m.
pub const PC_DISTANCE: f64 = 0.5;
/// Personal-space violation: robot–pedestrian center distance below this, m.
pub const PS_DISTANCE: f64 = 1.2;
/// An event ends once its predicate has stayed false this long, s.
pub const EVENT_CLEAR_TIME: f64 = 1.0;
/// Commands faster than this count as moving, m/s.
pub const MOVING_SPEED: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: String,
    pub condition: String,
    pub episodes: usize,
    /// Summed episode durations, min. Timeouts count at the full limit.
    pub running_time: f64,
    /// Summed travelled distance, m.
    pub distance: f64,
    /// Total distance over total moving time, m/s.
    pub mean_linear_vel: f64,
    /// Reached-goal percentage.
    pub rg: f64,
    pub timeout_pct: f64,
    pub failure_pct: f64,
    pub failures: usize,
    pub c: usize,
    pub pc: usize,
    pub ps: usize,
}

/// Counts events in a time-ordered predicate trace with the clear-time rule.
pub fn count_events(trace: impl IntoIterator<Item = (f64, bool)>) -> usize {
    let mut count = 0;
    let mut open = false;
    let mut last_true = f64::NEG_INFINITY;
    for (t, hit) in trace {
        if hit {
            if !open {
                count += 1;
                open = true;
            }
            last_true = t;
        } else if open && t - last_true >= EVENT_CLEAR_TIME - 1e-9 {
            open = false;
        }
    }
    count
}

pub fn near_collision(t: &Tick, robot_radius: f64) -> bool {
    t.min_range - robot_radius < NEAR_COLLISION
}

/// `(C, PC, PS)` event counts of one episode.
pub fn episode_events(log: &EpisodeLog) -> (usize, usize, usize) {
    let trace = |f: &dyn Fn(&Tick) -> bool| count_events(log.ticks.iter().map(|t| (t.t, f(t))));
    (
        trace(&|t| near_collision(t, log.robot_radius)),
        trace(&|t| t.min_ped < PC_DISTANCE),
        trace(&|t| t.min_ped < PS_DISTANCE),
    )
}

/// Path length and time spent moving.
pub fn episode_motion(log: &EpisodeLog) -> (f64, f64) {
    let mut dist = 0.0;
    let mut moving = 0.0;
    for w in log.ticks.windows(2) {
        dist += w[0].pose.position().dist(w[1].pose.position());
        if w[0].cmd.v.abs() > MOVING_SPEED {
            moving += w[1].t - w[0].t;
        }
    }
    (dist, moving)
}

/// Aggregates logs of one policy (and usually one condition). Event counts,
/// durations and distances are summed over episodes.
pub fn compute_metrics(policy: &str, condition: &str, logs: &[EpisodeLog]) -> MetricsReport {
    let n = logs.len();
    let mut r = MetricsReport {
        policy: policy.to_string(),
        condition: condition.to_string(),
        episodes: n,
        running_time: 0.0,
        distance: 0.0,
        mean_linear_vel: 0.0,
        rg: 0.0,
        timeout_pct: 0.0,
        failure_pct: 0.0,
        failures: 0,
        c: 0,
        pc: 0,
        ps: 0,
    };
    if n == 0 {
        return r;
    }
    let (mut reached, mut timeouts) = (0usize, 0usize);
    let (mut time, mut dist, mut moving) = (0.0, 0.0, 0.0);
    // Float totals depend on summation order; fix it by scenario.
    let mut sorted: Vec<&EpisodeLog> = logs.iter().collect();
    sorted.sort_by(|a, b| a.scenario.cmp(&b.scenario));
    for log in sorted {
        match log.outcome {
            Outcome::Reached => reached += 1,
            Outcome::Timeout => timeouts += 1,
            Outcome::Failure => r.failures += 1,
        }
        let (c, pc, ps) = episode_events(log);
        r.c += c;
        r.pc += pc;
        r.ps += ps;
        let (d, m) = episode_motion(log);
        dist += d;
        moving += m;
        time += log.duration;
    }
    let pct = |k: usize| 100.0 * k as f64 / n as f64;
    r.rg = pct(reached);
    r.timeout_pct = pct(timeouts);
    r.failure_pct = pct(r.failures);
    r.running_time = time / 60.0;
    r.distance = dist;
    r.mean_linear_vel = if moving > 0.0 { dist / moving } else { 0.0 };
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(bits: &[bool], dt: f64) -> Vec<(f64, bool)> {
        bits.iter().enumerate().map(|(i, &b)| (i as f64 * dt, b)).collect()
    }

    #[test]
    fn short_gap_merges() {
        let mut bits = vec![false; 40];
        bits[10..=20].iter_mut().for_each(|b| *b = true);
        bits[26..=30].iter_mut().for_each(|b| *b = true);
        assert_eq!(count_events(trace(&bits, 0.05)), 1);
    }

    #[test]
    fn long_gap_splits() {
        let mut bits = vec![false; 60];
        bits[5..=8].iter_mut().for_each(|b| *b = true);
        // Last true at tick 8 (0.8 s); false through 1.8 s closes the event.
        bits[19..=22].iter_mut().for_each(|b| *b = true);
        assert_eq!(count_events(trace(&bits, 0.1)), 2);
        let mut bits = vec![false; 60];
        bits[5..=8].iter_mut().for_each(|b| *b = true);
        bits[17..=22].iter_mut().for_each(|b| *b = true);
        assert_eq!(count_events(trace(&bits, 0.1)), 1);
    }

    #[test]
    fn never_true_is_zero() {
        assert_eq!(count_events(trace(&[false; 10], 0.1)), 0);
    }
}
