//! Episode runner, scenario generator, demonstration labels and metrics.

mod common;

use std::sync::Arc;

use common::{encounter, log, tick};
use socnav::baselines::{BaselineKind, ConcatNet};
use socnav::config::RunConfig;
use socnav::eval::episode::{run_episode, Controller, EpisodeConfig, EpisodeLog, Outcome};
use socnav::eval::metrics::compute_metrics;
use socnav::eval::report::{metrics_csv, metrics_table};
use socnav::eval::scenarios::{condition, CONDITIONS};
use socnav::expert::ExpertParams;
use socnav::pipeline::{read_logs, scenario_range, write_logs, Maps};
use socnav::training::dataset::{label_plan, label_stride};
use socnav::training::record_episode;
use socnav::worldsim::{step_robot, GridMap, Pose2D, RobotState, Scenario, Vec2, WorldConfig, SCENARIO_VERSION};

/// A 12 m by 2.4 m hallway closed at both ends.
fn corridor() -> Arc<GridMap> {
    let (w, h) = (120, 24);
    let mut m = GridMap::empty(0.1, w, h);
    for x in 0..w {
        m.set(x, 0, true);
        m.set(x, h - 1, true);
    }
    for y in 0..h {
        m.set(0, y, true);
        m.set(w - 1, y, true);
    }
    Arc::new(m)
}

fn hallway_scenario(start: Pose2D, goal: Vec2) -> Scenario {
    Scenario {
        v: SCENARIO_VERSION,
        map_ref: "corridor".into(),
        robot_start: start,
        goal,
        obstacles: vec![],
        pedestrians: vec![],
        seed: 7,
        condition: Some("E1".into()),
        sf_params: None,
    }
}

#[test]
fn start_near_goal_is_reached_immediately() {
    let s = hallway_scenario(Pose2D::new(5.0, 1.2, 0.0), Vec2::new(5.3, 1.2));
    let log = run_episode(corridor(), &s, Controller::Expert(ExpertParams::default()), &WorldConfig::default(), &EpisodeConfig::default()).unwrap();
    assert_eq!(log.outcome, Outcome::Reached);
    assert_eq!(log.ticks.len(), 1);
    assert_eq!(log.duration, 0.0);
}

#[test]
fn idle_policy_times_out() {
    let cfg = RunConfig::default();
    let mut net = ConcatNet::new(BaselineKind::Gc, cfg.arch(), 1).unwrap();
    for id in net.store.ids().collect::<Vec<_>>() {
        net.store.get_mut(id).data_mut().fill(0.0);
    }
    let s = hallway_scenario(Pose2D::new(1.0, 1.2, 0.0), Vec2::new(11.0, 1.2));
    let ep = EpisodeConfig { time_limit: 5.0, ..Default::default() };
    let log = run_episode(corridor(), &s, Controller::Baseline(&net), &cfg.world, &ep).unwrap();
    assert_eq!(log.outcome, Outcome::Timeout);
    assert!((log.duration - 5.0).abs() < 1e-9);
    assert_eq!(log.ticks.last().unwrap().pose, s.robot_start);
}

#[test]
fn expert_crosses_empty_corridor_at_cruise_speed() {
    let s = hallway_scenario(Pose2D::new(1.0, 1.2, 0.0), Vec2::new(11.0, 1.2));
    let p = ExpertParams::default();
    let log = run_episode(corridor(), &s, Controller::Expert(p), &WorldConfig::default(), &EpisodeConfig::default()).unwrap();
    assert_eq!(log.outcome, Outcome::Reached);
    // 9.5 m to the goal tolerance at cruise speed, plus braking.
    let ideal = (10.0 - 0.5) / p.cruise_speed;
    assert!(log.duration >= ideal && log.duration < ideal + 4.0, "took {} s", log.duration);
    assert!(log.ticks.iter().all(|t| t.cmd.within_limits()));
}

#[test]
fn generator_honours_counts_and_is_deterministic() {
    let cfg = RunConfig::default();
    let mut maps = Maps::default();
    for cond in CONDITIONS {
        let a = scenario_range(&mut maps, &cond, 0, 4, 42, &cfg).unwrap();
        let b = scenario_range(&mut maps, &cond, 0, 4, 42, &cfg).unwrap();
        let c = scenario_range(&mut maps, &cond, 0, 4, 43, &cfg).unwrap();
        for ((map, s), (_, t)) in a.iter().zip(&b) {
            assert_eq!(s.to_json(), t.to_json());
            assert_eq!(s.obstacles.len(), cond.counts.g, "{}", cond.name);
            let standing = s.pedestrians.iter().filter(|p| p.subgoals.is_empty()).count();
            assert_eq!(standing, cond.counts.sp, "{}", cond.name);
            assert_eq!(s.pedestrians.len() - standing, cond.counts.mp, "{}", cond.name);
            assert!(s.robot_start.position().dist(s.goal) >= 6.0);
            s.validate(map, cfg.world.robot_radius, cfg.world.pedestrian_radius).unwrap();
        }
        assert_ne!(a[0].1.to_json(), c[0].1.to_json());
    }
}

#[test]
fn labels_match_reintegrated_expert_commands() {
    let cfg = RunConfig::default();
    let mut maps = Maps::default();
    let set = scenario_range(&mut maps, &condition("E4").unwrap(), 0, 3, 5, &cfg).unwrap();
    let stride = label_stride(&cfg.world);
    let per_label = stride * cfg.world.history_every as usize;
    let mut checked = 0;
    for (map, s) in &set {
        let Ok(ep) = record_episode(map.clone(), s, cfg.expert, &cfg.world, &cfg.episode).unwrap() else {
            continue;
        };
        for (i, rec) in ep.records.iter().enumerate() {
            let Some(label) = label_plan(&ep.records, i, stride) else { break };
            let mut state = RobotState::new(rec.pose, cfg.world.robot_radius);
            let mut k = rec.step as usize;
            for j in 0..5 {
                for _ in 0..per_label {
                    state = step_robot(&state, ep.steps[k], cfg.world.dt);
                    k += 1;
                }
                let local = rec.pose.to_local(state.pose.position());
                let err = (local.x - label[4 * j]).hypot(local.y - label[4 * j + 1]);
                assert!(err < 1e-3, "{} record {i} pose {j}: {err}", ep.scenario);
                let dth = state.pose.theta - rec.pose.theta;
                assert!((dth.cos() - label[4 * j + 2]).abs() < 1e-6 && (dth.sin() - label[4 * j + 3]).abs() < 1e-6);
            }
            checked += 1;
        }
    }
    assert!(checked > 50, "only {checked} labels checked");
}

#[test]
fn proximity_events_and_goal_rate() {
    let a = log("a", Outcome::Reached, encounter());
    let b = log("b", Outcome::Timeout, (0..=30).map(|i| tick(i as f64 * 0.1, 0.0, 0.0, f64::INFINITY)).collect());
    let m = compute_metrics("proposed", "E4", &[a.clone(), b]);
    assert_eq!(m.pc, 2);
    assert_eq!(m.ps, 1);
    assert_eq!(m.c, 0);
    assert_eq!(m.rg, 50.0);
    assert!((m.distance - 3.0).abs() < 1e-9);
    assert!((m.running_time - 9.0 / 60.0).abs() < 1e-12);
    assert!((m.mean_linear_vel - 0.5).abs() < 1e-9);
    let solo = compute_metrics("proposed", "E4", &[a]);
    assert_eq!(solo.rg, 100.0);
}

#[test]
fn metrics_recompute_bitwise_from_saved_logs() {
    let cfg = RunConfig::default();
    let mut maps = Maps::default();
    let set = scenario_range(&mut maps, &condition("E6").unwrap(), 0, 2, 9, &cfg).unwrap();
    let logs: Vec<EpisodeLog> = set
        .iter()
        .map(|(m, s)| run_episode(m.clone(), s, Controller::Expert(cfg.expert), &cfg.world, &EpisodeConfig { time_limit: 20.0, ..cfg.episode }).unwrap())
        .collect();
    let dir = tempfile::tempdir().unwrap();
    write_logs(dir.path(), &logs).unwrap();
    let back = read_logs(dir.path()).unwrap();
    assert_eq!(metrics_csv(&metrics_table(&logs)), metrics_csv(&metrics_table(&back)));
}

#[test]
fn metrics_ignore_log_order() {
    // 0.1 + 0.2 + 0.3 rounds differently from 0.3 + 0.2 + 0.1.
    let logs: Vec<EpisodeLog> = (1..=3)
        .map(|k| log(&format!("s{k}"), Outcome::Reached, (0..=k).map(|i| tick(i as f64 * 0.1, 0.05 * i as f64, 0.5, 3.0)).collect()))
        .collect();
    assert_ne!((0.1 + 0.2) + 0.3, (0.3 + 0.2) + 0.1);
    let reversed: Vec<EpisodeLog> = logs.iter().rev().cloned().collect();
    assert_eq!(metrics_csv(&metrics_table(&logs)), metrics_csv(&metrics_table(&reversed)));
}
