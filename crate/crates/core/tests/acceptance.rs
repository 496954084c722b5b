//! Acceptance gate: every criterion prints one PASS/FAIL line; the test fails
//! if any criterion does.
//!
//! Criteria 5 through 8, 10 and 11 read the canonical run in
//! `target/canonical-run` (or `$SOCNAV_CANONICAL_RUN`). A missing run is
//! produced first with the default configuration, which takes hours.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use common::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socnav::baselines::{BaselineKind, ConcatNet};
use socnav::config::RunConfig;
use socnav::eval::episode::{EpisodeLog, Outcome};
use socnav::eval::metrics::compute_metrics;
use socnav::eval::report::{attention_correlation, metrics_csv, metrics_table};
use socnav::global_planner::{downsample, plan_on_grid, BlockedGrid, PlanError, PLAN_POINTS, PLAN_SPACING};
use socnav::nn::ops::*;
use socnav::nn::{ParamStore, Tensor};
use socnav::pipeline::{commands_within_limits, max_command, read_logs, run_pipeline, PolicyKind, RunDirs, RunSummary, Stage};
use socnav::policy::{Attention, PolicyArch, PolicyBatch, PolicyNets, LOCAL_PLAN_LEN};
use socnav::training::dataset::episode_samples;
use socnav::training::DemoArchive;
use socnav::worldsim::{step_robot, Pose2D, RobotState, Vec2, MAX_ANGULAR, MAX_LINEAR};

type Verdict = Result<String, String>;

fn workspace_target() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target")
}

fn canonical_root() -> PathBuf {
    std::env::var_os("SOCNAV_CANONICAL_RUN").map_or_else(|| workspace_target().join("canonical-run"), PathBuf::from)
}

/// The canonical run directory, produced (or resumed) when incomplete.
fn canonical_run() -> Result<PathBuf, String> {
    let root = canonical_root();
    let cfg = RunConfig::default();
    if let Ok(text) = std::fs::read_to_string(root.join("config.toml")) {
        let saved = RunConfig::from_toml(&text).map_err(|e| e.to_string())?;
        if saved.hash() != cfg.hash() {
            return Err(format!("{} holds a run of a different config", root.display()));
        }
    }
    if !root.join("summary.json").exists() {
        eprintln!("canonical run missing under {}; running the full pipeline", root.display());
        run_pipeline(&cfg, &RunDirs::new(&root)).map_err(|e| e.to_string())?;
    }
    Ok(root)
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 1 ---------------------------------------------------------------------

fn kernel_errors(rng: &mut ChaCha8Rng) -> Vec<(&'static str, f64)> {
    let mut rand_t = |shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    };
    let mut out = Vec::new();

    let (x, w, b) = (rand_t(&[3, 5]), rand_t(&[8, 5]), rand_t(&[8]));
    let r = rand_t(&[3, 8]);
    let (dx, dw, db) = dense_backward(&x, &w, &r, true);
    let e = tensor_check(&w, &dw, |w| dot(&dense_forward(&x, w, &b).unwrap(), &r))
        .max(tensor_check(&b, &db, |b| dot(&dense_forward(&x, &w, b).unwrap(), &r)))
        .max(tensor_check(&x, &dx.unwrap(), |x| dot(&dense_forward(x, &w, &b).unwrap(), &r)));
    out.push(("dense", e));

    let (dx, dw) = linear_backward(&x, &w, &r, true);
    let e = tensor_check(&w, &dw, |w| dot(&linear_forward(&x, w).unwrap(), &r))
        .max(tensor_check(&x, &dx.unwrap(), |x| dot(&linear_forward(x, &w).unwrap(), &r)));
    out.push(("linear", e));

    let mut e: f64 = 0.0;
    for (c_in, c_out, len, k, stride, pad) in [(2, 3, 12, 3, 2, 0), (3, 2, 9, 3, 1, 1), (1, 4, 20, 7, 3, 0)] {
        let (x, w, b) = (rand_t(&[c_in, 2, len]), rand_t(&[c_out, c_in, k]), rand_t(&[c_out]));
        let y = conv1d_forward(&x, &w, &b, stride, pad).unwrap();
        let r = rand_t(y.shape());
        let (dx, dw, db) = conv1d_backward(&x, &w, &r, stride, pad, true).unwrap();
        let f = |x: &Tensor, w: &Tensor, b: &Tensor| dot(&conv1d_forward(x, w, b, stride, pad).unwrap(), &r);
        e = e
            .max(tensor_check(&w, &dw, |w| f(&x, w, &b)))
            .max(tensor_check(&b, &db, |b| f(&x, &w, b)))
            .max(tensor_check(&x, &dx.unwrap(), |x| f(x, &w, &b)));
    }
    out.push(("conv1d", e));

    // Keep inputs away from the kink so the difference quotient is smooth.
    let mut x = rand_t(&[4, 6]);
    x.data_mut().iter_mut().for_each(|v| *v += 0.1 * v.signum());
    let r = rand_t(&[4, 6]);
    let relu = |x: &Tensor| {
        let mut y = x.clone();
        relu_inplace(&mut y);
        y
    };
    let mut g = r.clone();
    relu_backward_inplace(&relu(&x), &mut g);
    out.push(("relu", tensor_check(&x, &g, |x| dot(&relu(x), &r))));

    let (x, r) = (rand_t(&[6]), rand_t(&[6]));
    let g = Tensor::vector(softmax_backward(&softmax(x.data()), r.data()));
    out.push(("softmax", tensor_check(&x, &g, |x| dot(&Tensor::vector(softmax(x.data())), &r))));

    let x = rand_t(&[7, 4]);
    let offsets = [0, 3, 3, 7];
    let (y, arg) = maxpool_segments(&x, &offsets);
    let r = rand_t(y.shape());
    let g = maxpool_segments_backward(&r, &arg, 7);
    out.push(("maxpool", tensor_check(&x, &g, |x| dot(&maxpool_segments(x, &offsets).0, &r))));

    let (p, t) = (rand_t(&[4, 5]), rand_t(&[4, 5]));
    let (_, g) = l2_loss(&p, &t).unwrap();
    out.push(("l2", tensor_check(&p, &g, |p| l2_loss(p, &t).unwrap().0)));

    let mut store = ParamStore::new();
    let att = Attention::new(&mut store, "att", 3, 4, rng);
    let feats: Vec<Tensor> = (0..3).map(|_| weights(2, 4, rng)).collect();
    let r = weights(2, 12, rng);
    let fwd = |s: &ParamStore, f: &[Tensor]| {
        let refs: Vec<&Tensor> = f.iter().collect();
        dot(&att.forward(s, &refs).unwrap().0, &r)
    };
    let refs: Vec<&Tensor> = feats.iter().collect();
    let (_, cache) = att.forward(&store, &refs).unwrap();
    let mut grads = store.zero_grads();
    let d_feats = att.backward(&store, &cache, &r, &mut grads);
    let mut e: f64 = 0.0;
    for id in att.params() {
        let t = store.get(id).clone();
        e = e.max(tensor_check(&t, grads.get(id), |t| {
            let mut s = store.clone();
            *s.get_mut(id) = t.clone();
            fwd(&s, &feats)
        }));
    }
    for (i, d) in d_feats.iter().enumerate() {
        e = e.max(tensor_check(&feats[i], d, |t| {
            let mut f = feats.clone();
            f[i] = t.clone();
            fwd(&store, &f)
        }));
    }
    out.push(("attention", e));
    out
}

fn composed_error(rng: &mut ChaCha8Rng) -> (f64, usize, usize) {
    let arch = PolicyArch::default();
    let mut nets = PolicyNets::new(arch, 31).unwrap();
    randomize_biases(&mut nets.store, rng);
    let inputs: Vec<_> = [0, 2, 5].iter().map(|&p| random_input(&arch, p, rng)).collect();
    let refs: Vec<_> = inputs.iter().collect();
    let batch = PolicyBatch::new(&refs, &arch).unwrap();
    let (wp, wv) = (weights(3, LOCAL_PLAN_LEN, rng), weights(3, 2, rng));
    let loss = |n: &PolicyNets| {
        let (p, c) = n.forward_batch(&batch).unwrap();
        dot(p.plan(), &wp) + dot(c.velocity(), &wv)
    };
    let (p, c) = nets.forward_batch(&batch).unwrap();
    let mut grads = nets.store.zero_grads();
    nets.backward_full(&p, &c, wp.clone(), wv.clone(), &mut grads).unwrap();
    let (worst, _, probes, skipped) = spot_check(&nets.store, &grads, 2, rng, &|id, i, d| {
        let mut m = nets.clone();
        m.store.get_mut(id).data_mut()[i] += d;
        loss(&m)
    });
    (worst, probes, skipped)
}

fn baseline_error(rng: &mut ChaCha8Rng) -> (f64, usize) {
    let arch = PolicyArch::default();
    let (mut worst, mut skipped): (f64, usize) = (0.0, 0);
    for kind in [BaselineKind::Gc, BaselineKind::Tc] {
        let mut net = ConcatNet::new(kind, arch, 3).unwrap();
        randomize_biases(&mut net.store, rng);
        let lidar = Tensor::new(&[1, 2, arch.beams], (0..2 * arch.beams).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let aux = weights(2, kind.aux_len(), rng);
        let wv = weights(2, 2, rng);
        let c = net.forward(lidar.clone(), aux.clone()).unwrap();
        let mut grads = net.store.zero_grads();
        net.backward(&c, wv.clone(), &mut grads).unwrap();
        let (e, _, _, s) = spot_check(&net.store, &grads, 2, rng, &|id, i, d| {
            let mut m = net.clone();
            m.store.get_mut(id).data_mut()[i] += d;
            dot(m.forward(lidar.clone(), aux.clone()).unwrap().velocity(), &wv)
        });
        worst = worst.max(e);
        skipped += s;
    }
    (worst, skipped)
}

fn gradient_integrity() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let kernels = kernel_errors(&mut rng);
    let (composed, probes, skip_c) = composed_error(&mut rng);
    let (baselines, skip_b) = baseline_error(&mut rng);
    let secs = start.elapsed().as_secs_f64();
    let worst_kernel = kernels.iter().map(|k| k.1).fold(0.0, f64::max);
    let detail = format!(
        "kernels max {worst_kernel:.2e} ({}), composed {composed:.2e} over {probes} parameters, baselines {baselines:.2e}, {} probes on activation switches redrawn, {secs:.0} s",
        kernels.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", "),
        skip_c + skip_b
    );
    check(worst_kernel < TOL && composed < TOL && baselines < TOL && probes >= 20 && secs < 120.0, detail)
}

// 2, 3 ------------------------------------------------------------------

fn attention_invariants() -> Verdict {
    let arch = PolicyArch::default();
    let nets = PolicyNets::new(arch, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inputs: Vec<_> = (0..1000)
        .map(|_| {
            let p = rng.gen_range(0..=6);
            random_input(&arch, p, &mut rng)
        })
        .collect();
    let (mut worst_a, mut worst_b, mut inside) = (0.0f64, 0.0f64, true);
    for chunk in inputs.chunks(250) {
        let refs: Vec<_> = chunk.iter().collect();
        for out in nets.act_batch(&refs).unwrap() {
            let (a, b) = (out.readout.a, out.readout.b);
            worst_a = worst_a.max((a.iter().sum::<f64>() - 1.0).abs());
            worst_b = worst_b.max((b.iter().sum::<f64>() - 1.0).abs());
            inside &= a.iter().chain(&b).all(|&x| x > 0.0 && x < 1.0);
        }
    }
    check(
        worst_a < 1e-9 && worst_b < 1e-9 && inside,
        format!("1000 inputs, |sum a - 1| <= {worst_a:.1e}, |sum b - 1| <= {worst_b:.1e}, entries in (0, 1): {inside}"),
    )
}

fn set_invariance() -> Verdict {
    let arch = PolicyArch::default();
    let nets = PolicyNets::new(arch, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for _ in 0..500 {
        let people = rng.gen_range(1..=6);
        let base = random_input(&arch, people, &mut rng);
        let mut shuffled = base.clone();
        shuffled.humans.shuffle(&mut rng);
        let mut duplicated = shuffled.clone();
        let extra = duplicated.humans[rng.gen_range(0..people)].clone();
        duplicated.humans.insert(rng.gen_range(0..=people), extra);
        let out = nets.act_batch(&[&base, &shuffled, &duplicated]).unwrap();
        let bits = |o: &socnav::policy::PolicyOutput| {
            let mut v: Vec<u64> = o.plan.0.iter().map(|x| x.to_bits()).collect();
            v.extend([o.raw.v, o.raw.w].map(f64::to_bits));
            v.extend(o.readout.a.iter().chain(&o.readout.b).map(|x| x.to_bits()));
            v
        };
        mismatches += out[1..].iter().filter(|o| bits(o) != bits(&out[0])).count();
    }
    check(mismatches == 0, format!("500 sets, {mismatches} outputs differ bitwise after permuting or duplicating rows"))
}

// 4 ---------------------------------------------------------------------

fn planner_optimality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut reachable, mut cost_mismatch, mut contract_breaks, mut plans_checked) = (0, 0, 0, 0);
    for _ in 0..100 {
        let (w, h) = (20, 20);
        let density = rng.gen_range(0.0..0.35);
        let grid = BlockedGrid {
            width: w,
            height: h,
            resolution: 0.25,
            origin: Vec2::new(0.0, 0.0),
            blocked: (0..w * h).map(|_| rng.gen_bool(density)).collect(),
        };
        let free: Vec<usize> = (0..w * h).filter(|&i| !grid.blocked[i]).collect();
        if free.len() < 2 {
            continue;
        }
        let (s, g) = (free[rng.gen_range(0..free.len())], free[rng.gen_range(0..free.len())]);
        let oracle = bellman_ford(&grid, s);
        let center = |i: usize| grid.center(i % w, i / w);
        let goal = center(g) + Vec2::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
        match plan_on_grid(&grid, center(s), goal) {
            Ok(plan) => {
                reachable += 1;
                cost_mismatch += usize::from(plan.cost != oracle[g]);
                for _ in 0..10 {
                    let near = plan.waypoints[rng.gen_range(0..plan.waypoints.len())];
                    let pose = Pose2D::new(near.x + rng.gen_range(-0.3..0.3), near.y + rng.gen_range(-0.3..0.3), 0.0);
                    let d = downsample(&plan, &pose, goal);
                    let pad = d.waypoints.iter().rposition(|&p| p != goal).map_or(0, |i| i + 1);
                    let spaced = d.waypoints[..pad].windows(2).all(|p| p[0].dist(p[1]) >= PLAN_SPACING);
                    let padded = d.waypoints[pad..].iter().all(|&p| p == goal);
                    contract_breaks += usize::from(d.waypoints.len() != PLAN_POINTS || !spaced || !padded);
                    plans_checked += 1;
                }
            }
            Err(PlanError::Unreachable) => cost_mismatch += usize::from(oracle[g].is_finite()),
            Err(e) => return Err(format!("planner error {e}")),
        }
    }
    check(
        cost_mismatch == 0 && contract_breaks == 0 && reachable > 0,
        format!(
            "100 grids ({reachable} reachable), {cost_mismatch} cost mismatches; {plans_checked} downsampled plans, {contract_breaks} contract breaks"
        ),
    )
}

// 5 ---------------------------------------------------------------------

fn label_oracle(root: &Path) -> Verdict {
    let cfg = RunConfig::default();
    let archive = DemoArchive::read(&root.join("demos.snda")).map_err(|e| e.to_string())?;
    let w = &cfg.world;
    let per_label = socnav::training::dataset::label_stride(w) * w.history_every as usize;
    let (mut worst, mut labels) = (0.0f64, 0usize);
    for (idx, ep) in archive.episodes.iter().enumerate() {
        let samples = episode_samples(ep, idx, w).map_err(|e| e.to_string())?;
        for (rec, s) in ep.records.iter().zip(&samples) {
            let mut state = RobotState::new(rec.pose, w.robot_radius);
            let mut k = rec.step as usize;
            for j in 0..5 {
                for _ in 0..per_label {
                    state = step_robot(&state, ep.steps[k], w.dt);
                    k += 1;
                }
                let p = rec.pose.to_local(state.pose.position());
                worst = worst.max((p.x - s.label_plan[4 * j]).hypot(p.y - s.label_plan[4 * j + 1]));
            }
            labels += 1;
        }
    }
    check(
        worst < 1e-3 && labels > 0,
        format!("{} episodes, {labels} labelled records, worst position error {worst:.2e} m", archive.episodes.len()),
    )
}

// 6 ---------------------------------------------------------------------

fn parse_manifest(text: &str) -> Option<(f64, f64, usize, usize)> {
    let header: Vec<&str> = text.lines().next()?.split_whitespace().collect();
    let field = |name: &str| header.iter().position(|&t| t == name).and_then(|i| header.get(i + 1));
    let best_val: f64 = field("best_val")?.parse().ok()?;
    let best_epoch: usize = field("best_epoch")?.parse().ok()?;
    let rows: Vec<&str> = text.lines().skip(2).filter(|l| !l.trim().is_empty()).collect();
    let first_val: f64 = rows.first()?.split('\t').nth(2)?.parse().ok()?;
    Some((first_val, best_val, best_epoch, rows.len()))
}

fn training_health(root: &Path) -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for stage in [Stage::One, Stage::Two, Stage::Three, Stage::Tc] {
        let path = root.join("ckpt").join(stage.manifest());
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let (first, best, epoch, epochs) = parse_manifest(&text).ok_or_else(|| format!("{}: malformed", path.display()))?;
        let ratio = best / first;
        // TC is reported alongside; the criterion covers the three stages of the proposed model.
        if stage != Stage::Tc {
            ok &= ratio < 0.5;
        }
        parts.push(format!("stage {} best/epoch1 {ratio:.3} (epoch {epoch} of {epochs})", stage.name()));
    }
    let timing = std::fs::read_to_string(root.join("timing.txt")).map_err(|e| format!("timing.txt: {e}"))?;
    let mut secs = BTreeMap::new();
    for line in timing.lines() {
        let t: Vec<&str> = line.split_whitespace().collect();
        if let [_, name, s, ..] = t[..] {
            secs.insert(name.to_string(), s.parse::<f64>().unwrap_or(f64::NAN));
        }
    }
    let total: f64 = ["1", "2", "3"].iter().map(|s| secs.get(*s).copied().unwrap_or(f64::NAN)).sum();
    ok &= total < 4.0 * 3600.0;
    parts.push(format!("stages 1-3 wall time {:.2} h", total / 3600.0));
    check(ok, parts.join("; "))
}

// 7, 8, 10 --------------------------------------------------------------

fn eval_logs(root: &Path) -> Result<Vec<EpisodeLog>, String> {
    let cfg = RunConfig::default();
    let dirs = RunDirs::new(root);
    let mut logs = Vec::new();
    for &seed in &cfg.eval.seeds {
        for kind in PolicyKind::ALL {
            logs.extend(read_logs(&dirs.logs(seed, kind)).map_err(|e| e.to_string())?);
        }
    }
    Ok(logs)
}

fn trend_reproduction(root: &Path) -> Verdict {
    let text = std::fs::read_to_string(root.join("summary.json")).map_err(|e| e.to_string())?;
    let s: RunSummary = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let per_seed: Vec<String> = s
        .trends
        .iter()
        .map(|t| {
            let rg = |k: &str| t.rg.get(k).copied().unwrap_or(f64::NAN);
            let pc = |k: &str| t.pc.get(k).copied().unwrap_or(0);
            format!(
                "seed {}: RG proposed {:.0}% gc {:.0}% tc {:.0}% expert {:.0}%, PC proposed {} tc {}",
                t.seed,
                rg("proposed"),
                rg("gc"),
                rg("tc"),
                rg("expert"),
                pc("proposed"),
                pc("tc")
            )
        })
        .collect();
    let flag = |ok: bool| if ok { "holds" } else { "FLAGGED" };
    check(
        s.majority_rg_at_least_70 && s.majority_rg_beats_baselines && s.majority_pc_not_above_tc,
        format!(
            "(a) {} (b) {} (c) {} by majority; {}",
            flag(s.majority_rg_at_least_70),
            flag(s.majority_rg_beats_baselines),
            flag(s.majority_pc_not_above_tc),
            per_seed.join("; ")
        ),
    )
}

fn safety_clamp(logs: &[EpisodeLog]) -> Verdict {
    let ticks: usize = logs.iter().map(|l| l.ticks.len()).sum();
    let (v, w) = max_command(logs);
    check(
        commands_within_limits(logs) && ticks > 0,
        format!("{} episodes, {ticks} ticks, max |v| {v:.4} (limit {MAX_LINEAR}), max |w| {w:.4} (limit {MAX_ANGULAR})", logs.len()),
    )
}

fn attention_context(logs: &[EpisodeLog]) -> Verdict {
    let proposed: Vec<EpisodeLog> = logs.iter().filter(|l| l.policy == "proposed").cloned().collect();
    let c = attention_correlation(&proposed);
    check(
        c.lidar_holds() && c.goal_holds(),
        format!(
            "b_r near {:.4} ({} ticks) vs open {:.4} ({} ticks), diff {:+.4}; b_g near goal {:.4} ({} ticks) vs elsewhere {:.4} ({} ticks), diff {:+.4}",
            c.br_near,
            c.ticks_near,
            c.br_open,
            c.ticks_open,
            c.br_near - c.br_open,
            c.bg_goal,
            c.ticks_goal,
            c.bg_elsewhere,
            c.ticks_elsewhere,
            c.bg_goal - c.bg_elsewhere
        ),
    )
}

// 9 ---------------------------------------------------------------------

fn metric_correctness() -> Verdict {
    let reached = log("a", Outcome::Reached, encounter());
    let timeout = log("b", Outcome::Timeout, (0..=30).map(|i| tick(i as f64 * 0.1, 0.0, 0.0, f64::INFINITY)).collect());
    // Two wall brushes 0.5 s apart merge into one near-collision event; a
    // third after a 2 s clearance is separate.
    let brushes: Vec<_> = (0..=60)
        .map(|i| {
            let t = i as f64 * 0.1;
            let mut k = tick(t, 0.2 * t, 0.2, 5.0);
            if (1.0..1.25).contains(&t) || (1.75..2.05).contains(&t) || (4.0..4.15).contains(&t) {
                k.min_range = 0.5;
            }
            k
        })
        .collect();
    let failed = log("c", Outcome::Failure, brushes);
    let m = compute_metrics("proposed", "E4", &[reached, timeout, failed]);
    let expected = (2, 1, 2, 1);
    let got = (m.pc, m.ps, m.c, m.failures);
    let pct_ok = (m.rg - 100.0 / 3.0).abs() < 1e-12 && (m.failure_pct - 100.0 / 3.0).abs() < 1e-12 && (m.timeout_pct - 100.0 / 3.0).abs() < 1e-12;
    check(
        got == expected && pct_ok,
        format!("(PC, PS, C, F) = {got:?}, expected {expected:?}; RG {:.4}% F {:.4}% timeouts {:.4}%", m.rg, m.failure_pct, m.timeout_pct),
    )
}

// 11 --------------------------------------------------------------------

const TINY: &str = "seed = 5\n[dataset.episodes]\nE1 = 1\nE4 = 3\n[train]\nmax_epochs = 2\n[eval]\nseeds = [1]\n[eval.scenarios]\nE4 = 2\nE7 = 1\n";

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).into_iter().flatten().flatten() {
            let p = entry.path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.insert(p.strip_prefix(base).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn cli_session(dir: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let config = dir.join("tiny.toml");
    std::fs::write(&config, TINY).map_err(|e| e.to_string())?;
    let out = dir.join("out");
    let verbs: &[&[&str]] = &[
        &["gen-scenarios", "--condition", "E6", "--n", "2"],
        &["collect"],
        &["train", "--stage", "1"],
        &["train", "--stage", "2"],
        &["train", "--stage", "3"],
        &["train", "--stage", "tc"],
        &["eval", "--policy", "proposed"],
        &["eval", "--policy", "tc"],
        &["report", "--logs", "out/eval/seed1/logs/proposed", "out/eval/seed1/logs/tc", "--scenarios", "out/eval/seed1/scenarios"],
    ];
    for args in verbs {
        let status = Command::new(env!("CARGO_BIN_EXE_socnav"))
            .current_dir(dir)
            .env("RUST_LOG", "warn")
            .args(["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .args(*args)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("socnav {} failed: {}", args.join(" "), String::from_utf8_lossy(&status.stderr)));
        }
    }
    Ok(files(&out))
}

fn determinism(root: &Path) -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (fa, fb) = (cli_session(a.path())?, cli_session(b.path())?);
    let differing: Vec<String> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    let ckpts = fa.keys().filter(|k| k.extension().is_some_and(|e| e == "ckpt")).count();
    let logs = fa.keys().filter(|k| k.starts_with("eval") && k.extension().is_some_and(|e| e == "json")).count();

    // Metrics recomputed from the canonical logs match the saved tables.
    let cfg = RunConfig::default();
    let dirs = RunDirs::new(root);
    let mut table_mismatch = Vec::new();
    for &seed in &cfg.eval.seeds {
        let mut logs = Vec::new();
        for kind in PolicyKind::ALL {
            logs.extend(read_logs(&dirs.logs(seed, kind)).map_err(|e| e.to_string())?);
        }
        let saved = std::fs::read_to_string(dirs.report(seed).join("metrics.csv")).map_err(|e| e.to_string())?;
        if saved != metrics_csv(&metrics_table(&logs)) {
            table_mismatch.push(seed);
        }
    }
    check(
        differing.is_empty() && table_mismatch.is_empty() && ckpts == 4 && logs > 0,
        format!(
            "two CLI sessions: {} files ({ckpts} checkpoints, {logs} logs), {} differ {:?}; canonical metrics.csv recomputed for seeds {:?}, mismatches {:?}",
            fa.len(),
            differing.len(),
            differing,
            cfg.eval.seeds,
            table_mismatch
        ),
    )
}

// -----------------------------------------------------------------------

#[test]
fn acceptance() {
    let run = canonical_run();
    let heavy = |f: &dyn Fn(&Path) -> Verdict| match &run {
        Ok(root) => f(root),
        Err(e) => Err(format!("canonical run unavailable: {e}")),
    };
    let logs = run.as_ref().map_err(|e| e.clone()).and_then(|r| eval_logs(r));
    let with_logs = |f: &dyn Fn(&[EpisodeLog]) -> Verdict| match &logs {
        Ok(l) => f(l),
        Err(e) => Err(format!("evaluation logs unavailable: {e}")),
    };

    let results: Vec<(&str, Verdict)> = vec![
        ("gradient integrity", gradient_integrity()),
        ("attention invariants", attention_invariants()),
        ("set invariance", set_invariance()),
        ("planner optimality", planner_optimality()),
        ("label oracle", heavy(&label_oracle)),
        ("training health", heavy(&training_health)),
        ("trend reproduction", heavy(&trend_reproduction)),
        ("safety clamp", with_logs(&safety_clamp)),
        ("metric correctness", metric_correctness()),
        ("attention-context correlation", with_logs(&attention_context)),
        ("determinism", heavy(&determinism)),
    ];

    let mut report = String::new();
    for (i, (name, v)) in results.iter().enumerate() {
        let (tag, detail) = match v {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        report.push_str(&format!("criterion {:>2} {tag} {name}: {detail}\n", i + 1));
    }
    // Written past the harness's capture so the table shows on every run.
    let _ = std::io::stderr().write_all(report.as_bytes());
    let _ = std::fs::write(workspace_target().join("acceptance.txt"), &report);
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, (_, v))| v.is_err()).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "criteria failing: {failed:?}");
}
