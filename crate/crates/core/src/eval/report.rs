//! CSV and SVG artifacts derived from episode logs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::worldsim::{GridMap, Scenario, Shape, Vec2};

use super::episode::EpisodeLog;
use super::metrics::{compute_metrics, MetricsReport};

pub const METRICS_HEADER: &str = "Model,Env,Running Time (min),Distance (m),Linear Vel. (m/s),RG (%),F,C,PC,PS";
pub const ATTENTION_HEADER: &str = "time,a_g,a_r,a_h,a_o,b_l,b_r,b_g";

/// Obstacle proximity and goal proximity thresholds of the correlation check, m.
pub const NEAR_OBSTACLE: f64 = 1.0;
pub const OPEN_SPACE: f64 = 3.0;
pub const NEAR_GOAL: f64 = 2.0;

/// One report per policy and condition, sorted by both.
pub fn metrics_table(logs: &[EpisodeLog]) -> Vec<MetricsReport> {
    let mut groups: BTreeMap<(&str, &str), Vec<EpisodeLog>> = BTreeMap::new();
    for log in logs {
        groups.entry((&log.policy, &log.condition)).or_default().push(log.clone());
    }
    groups.into_iter().map(|((p, c), g)| compute_metrics(p, c, &g)).collect()
}

pub fn metrics_csv(rows: &[MetricsReport]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}/{},{},{},{}",
            r.policy, r.condition, r.running_time, r.distance, r.mean_linear_vel, r.rg, r.failures, r.episodes, r.c, r.pc, r.ps
        );
    }
    s
}

/// Per-tick attention table; `None` for logs without attention readouts.
pub fn attention_csv(log: &EpisodeLog) -> Option<String> {
    let mut s = format!("{ATTENTION_HEADER}\n");
    let mut any = false;
    for t in &log.ticks {
        if let (Some(a), Some(b)) = (t.a, t.b) {
            any = true;
            let _ = writeln!(s, "{},{},{},{},{},{},{},{}", t.t, a[0], a[1], a[2], a[3], b[0], b[1], b[2]);
        }
    }
    any.then_some(s)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttentionCorrelation {
    pub br_near: f64,
    pub br_open: f64,
    pub ticks_near: usize,
    pub ticks_open: usize,
    pub bg_goal: f64,
    pub bg_elsewhere: f64,
    pub ticks_goal: usize,
    pub ticks_elsewhere: usize,
}

impl AttentionCorrelation {
    pub fn lidar_holds(&self) -> bool {
        self.br_near > self.br_open
    }

    pub fn goal_holds(&self) -> bool {
        self.bg_goal > self.bg_elsewhere
    }
}

/// Contrasts of the controller's lidar and plan attention over all ticks
/// that carry a readout.
pub fn attention_correlation(logs: &[EpisodeLog]) -> AttentionCorrelation {
    let mut sums = [0.0; 4];
    let mut c = AttentionCorrelation::default();
    let mut sorted: Vec<&EpisodeLog> = logs.iter().collect();
    sorted.sort_by(|a, b| (&a.policy, &a.scenario).cmp(&(&b.policy, &b.scenario)));
    for t in sorted.into_iter().flat_map(|l| &l.ticks) {
        let Some(b) = t.b else { continue };
        if t.min_range < NEAR_OBSTACLE {
            sums[0] += b[1];
            c.ticks_near += 1;
        } else if t.min_range > OPEN_SPACE {
            sums[1] += b[1];
            c.ticks_open += 1;
        }
        if t.goal_dist < NEAR_GOAL {
            sums[2] += b[2];
            c.ticks_goal += 1;
        } else {
            sums[3] += b[2];
            c.ticks_elsewhere += 1;
        }
    }
    let mean = |s: f64, n: usize| if n > 0 { s / n as f64 } else { f64::NAN };
    c.br_near = mean(sums[0], c.ticks_near);
    c.br_open = mean(sums[1], c.ticks_open);
    c.bg_goal = mean(sums[2], c.ticks_goal);
    c.bg_elsewhere = mean(sums[3], c.ticks_elsewhere);
    c
}

const SVG_W: f64 = 720.0;
const SVG_H: f64 = 360.0;

/// Stacked areas of `b` over time with obstacle distance and goal distance
/// drawn on top, both scaled to the lidar range.
pub fn attention_svg(log: &EpisodeLog, r_max: f64) -> Option<String> {
    let ticks: Vec<_> = log.ticks.iter().filter(|t| t.b.is_some()).collect();
    let t_end = ticks.last()?.t.max(1e-6);
    let (pad, w, h) = (40.0, SVG_W - 60.0, SVG_H - 70.0);
    let x = |t: f64| pad + w * t / t_end;
    let y = |v: f64| pad + h * (1.0 - v.clamp(0.0, 1.0));
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <text x=\"{pad}\" y=\"20\">{} attention b over time</text>\n",
        log.scenario
    );
    let colors = ["#4c72b0", "#dd8452", "#55a868"];
    let names = ["b_l", "b_r", "b_g"];
    for k in 0..3 {
        let lower = |b: &[f64; 3]| b[..k].iter().sum::<f64>();
        let mut pts = String::new();
        for t in &ticks {
            let b = t.b.unwrap();
            let _ = write!(pts, "{:.2},{:.2} ", x(t.t), y(lower(&b) + b[k]));
        }
        for t in ticks.iter().rev() {
            let _ = write!(pts, "{:.2},{:.2} ", x(t.t), y(lower(&t.b.unwrap())));
        }
        let _ = writeln!(s, "<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.7\"/>", pts.trim_end(), colors[k]);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>", pad + 60.0 * k as f64, SVG_H - 12.0, colors[k], names[k]);
    }
    let line = |f: &dyn Fn(&crate::eval::episode::Tick) -> f64| {
        ticks.iter().map(|t| format!("{:.2},{:.2}", x(t.t), y(f(t) / r_max))).collect::<Vec<_>>().join(" ")
    };
    let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>", line(&|t| t.min_range));
    let _ = writeln!(
        s,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#c44e52\" stroke-width=\"1.5\" stroke-dasharray=\"5,3\"/>",
        line(&|t| t.goal_dist)
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\">min range</text>", pad + 200.0, SVG_H - 12.0);
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" fill=\"#c44e52\">goal distance (scaled by {r_max} m)</text>", pad + 280.0, SVG_H - 12.0);
    let _ = writeln!(
        s,
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"#888\"/>\n<text x=\"{}\" y=\"{}\">{t_end:.1} s</text>\n</svg>",
        pad + w - 30.0,
        pad + h + 14.0
    );
    Some(s)
}

/// Map, obstacles, pedestrian starts, robot path and predicted local plans.
pub fn trajectory_svg(map: &GridMap, scenario: &Scenario, log: &EpisodeLog) -> String {
    let scale = 40.0;
    let ext = map.extent();
    let (w, h) = (ext.x * scale, ext.y * scale);
    let px = |p: Vec2| ((p.x - map.origin.x) * scale, h - (p.y - map.origin.y) * scale);
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let cell = map.resolution * scale;
    for iy in 0..map.height {
        let mut ix = 0;
        while ix < map.width {
            if !map.cells[iy * map.width + ix] {
                ix += 1;
                continue;
            }
            let start = ix;
            while ix < map.width && map.cells[iy * map.width + ix] {
                ix += 1;
            }
            let _ = writeln!(
                s,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{cell:.1}\" fill=\"#444\"/>",
                start as f64 * cell,
                h - (iy + 1) as f64 * cell,
                (ix - start) as f64 * cell
            );
        }
    }
    for o in &scenario.obstacles {
        let (cx, cy) = px(o.center());
        match o.shape {
            Shape::Cylinder { radius } => {
                let _ = writeln!(s, "<circle cx=\"{cx:.1}\" cy=\"{cy:.1}\" r=\"{:.1}\" fill=\"#8c8c8c\"/>", radius * scale);
            }
            Shape::Box { half_x, half_y } => {
                let _ = writeln!(
                    s,
                    "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#8c8c8c\" transform=\"rotate({:.2} {cx:.1} {cy:.1})\"/>",
                    cx - half_x * scale,
                    cy - half_y * scale,
                    2.0 * half_x * scale,
                    2.0 * half_y * scale,
                    -o.pose.theta.to_degrees()
                );
            }
        }
    }
    for p in &scenario.pedestrians {
        let (cx, cy) = px(p.start.position());
        let fill = if p.subgoals.is_empty() { "#937860" } else { "#da8bc3" };
        let _ = writeln!(s, "<circle cx=\"{cx:.1}\" cy=\"{cy:.1}\" r=\"{:.1}\" fill=\"{fill}\"/>", 0.25 * scale);
    }
    // Local plans every 2 s, drawn in the world frame.
    let every = (2.0 / log.control_period).round().max(1.0) as usize;
    for t in log.ticks.iter().step_by(every) {
        let Some(plan) = &t.plan else { continue };
        let pts: Vec<String> = std::iter::once(t.pose.position())
            .chain(plan.poses().iter().map(|q| t.pose.to_world(q.position())))
            .map(|p| {
                let (x, y) = px(p);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"#55a868\" stroke-width=\"1.5\"/>", pts.join(" "));
    }
    let path: Vec<String> = log
        .ticks
        .iter()
        .map(|t| {
            let (x, y) = px(t.pose.position());
            format!("{x:.1},{y:.1}")
        })
        .collect();
    let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"#4c72b0\" stroke-width=\"2\"/>", path.join(" "));
    let (sx, sy) = px(scenario.robot_start.position());
    let (gx, gy) = px(scenario.goal);
    let _ = writeln!(s, "<circle cx=\"{sx:.1}\" cy=\"{sy:.1}\" r=\"6\" fill=\"#4c72b0\"/>");
    let _ = writeln!(s, "<circle cx=\"{gx:.1}\" cy=\"{gy:.1}\" r=\"8\" fill=\"none\" stroke=\"#c44e52\" stroke-width=\"3\"/>");
    s.push_str("</svg>\n");
    s
}

fn write(dir: &Path, name: &str, text: &str) -> std::io::Result<()> {
    std::fs::write(dir.join(name), text)
}

/// Writes `metrics.csv`, the attention summary and, for every log with
/// attention readouts, its attention table and plots. `scenarios` supplies
/// map and layout for trajectory plots by scenario id.
pub fn emit_reports(
    logs: &[EpisodeLog],
    scenarios: &BTreeMap<String, (std::sync::Arc<GridMap>, Scenario)>,
    r_max: f64,
    out_dir: &Path,
) -> std::io::Result<Vec<MetricsReport>> {
    std::fs::create_dir_all(out_dir)?;
    let rows = metrics_table(logs);
    write(out_dir, "metrics.csv", &metrics_csv(&rows))?;
    let attended: Vec<EpisodeLog> = logs.iter().filter(|l| l.ticks.iter().any(|t| t.b.is_some())).cloned().collect();
    if !attended.is_empty() {
        let corr = attention_correlation(&attended);
        write(out_dir, "attention_summary.json", &serde_json::to_string_pretty(&corr).expect("serializes"))?;
    }
    for log in &attended {
        if let Some(csv) = attention_csv(log) {
            write(out_dir, &format!("attention_{}.csv", log.scenario), &csv)?;
        }
        if let Some(svg) = attention_svg(log, r_max) {
            write(out_dir, &format!("attention_{}.svg", log.scenario), &svg)?;
        }
        if let Some((map, sc)) = scenarios.get(&log.scenario) {
            write(out_dir, &format!("trajectory_{}.svg", log.scenario), &trajectory_svg(map, sc, log))?;
        }
    }
    Ok(rows)
}
