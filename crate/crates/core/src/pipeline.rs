//! The steps behind the CLI verbs: scenario sets, demonstration collection,
//! staged training, evaluation and reports. Everything is keyed by the run
//! config and its seed so that repeating a step reproduces its files.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{BaselineKind, ConcatNet};
use crate::config::{ConfigError, RunConfig};
use crate::eval::episode::{run_episode, scenario_id, Controller, EpisodeError, EpisodeLog};
use crate::eval::report::{attention_correlation, emit_reports, AttentionCorrelation};
use crate::eval::scenarios::{condition, gen_scenario, scenario_seed, Condition, GenError};
use crate::nn::NnError;
use crate::par;
use crate::policy::PolicyNets;
use crate::training::collect::{collect_demos, Rejection, GATE_MIN_RG};
use crate::training::stages::{derive_seed, train_baseline, train_stage2, train_stage3, StageReport};
use crate::training::{build_dataset, Dataset, DemoArchive, TrainError};
use crate::worldsim::{builtin_map, load_map, GridMap, Scenario, MAX_ANGULAR, MAX_LINEAR};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Infeasible(#[from] GenError),
    #[error("checkpoint {path}: {what}")]
    Checkpoint { path: String, what: String },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error("expert quality gate failed: {0}")]
    Gate(String),
    #[error("{0}")]
    Io(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Infeasible(_) => 3,
            PipelineError::Checkpoint { .. } => 4,
            PipelineError::Train(TrainError::Nn(NnError::Checkpoint(_) | NnError::Io(_))) => 4,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(path: &Path, e: impl fmt::Display) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Shipped maps, parsed once per name.
#[derive(Default)]
pub struct Maps(HashMap<String, Arc<GridMap>>);

impl Maps {
    pub fn get(&mut self, name: &str) -> Result<Arc<GridMap>> {
        if let Some(m) = self.0.get(name) {
            return Ok(m.clone());
        }
        let text = builtin_map(name).ok_or_else(|| ConfigError(format!("unknown map {name}")))?;
        let map = Arc::new(load_map(text).map_err(|e| ConfigError(format!("map {name}: {e}")))?);
        self.0.insert(name.to_string(), map.clone());
        Ok(map)
    }
}

pub type ScenarioSet = Vec<(Arc<GridMap>, Scenario)>;

fn known_condition(name: &str) -> Result<Condition> {
    condition(name).ok_or_else(|| ConfigError(format!("unknown condition {name}")).into())
}

/// Scenarios `start..start + n` of a condition's stream seeded by `seed`.
pub fn scenario_range(maps: &mut Maps, cond: &Condition, start: usize, n: usize, seed: u64, cfg: &RunConfig) -> Result<ScenarioSet> {
    let map = maps.get(cond.map)?;
    (start..start + n)
        .map(|i| {
            let mut s = gen_scenario(&map, cond.map, cond.counts, scenario_seed(seed, i), &cfg.world)?;
            s.condition = Some(cond.name.to_string());
            Ok((map.clone(), s))
        })
        .collect()
}

pub fn training_seed(cfg: &RunConfig, cond: &str) -> u64 {
    derive_seed(cfg.seed, &format!("train-{cond}"))
}

/// Held-out scenarios depend only on the evaluation seed, so every trained
/// model meets the same benchmark.
pub fn eval_seed(eval: u64, cond: &str) -> u64 {
    derive_seed(eval, &format!("eval-{cond}"))
}

pub fn eval_scenarios(maps: &mut Maps, cfg: &RunConfig, seed: u64) -> Result<ScenarioSet> {
    let mut out = Vec::new();
    for (name, &n) in &cfg.eval.scenarios {
        let cond = known_condition(name)?;
        out.extend(scenario_range(maps, &cond, 0, n, eval_seed(seed, name), cfg)?);
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CollectReport {
    pub config_hash: String,
    pub attempted: usize,
    pub accepted: usize,
    /// Expert success rate over all attempted scenarios.
    pub expert_rate: f64,
    pub gate_passed: bool,
    pub rejected: Vec<Rejection>,
}

/// Records expert demonstrations until every condition has its quota of
/// accepted episodes. Rejected scenarios are replaced by the next ones in
/// the same seeded stream.
pub fn collect(cfg: &RunConfig) -> Result<(DemoArchive, CollectReport)> {
    let mut maps = Maps::default();
    let mut episodes = Vec::new();
    let mut report = CollectReport {
        config_hash: cfg.hash(),
        ..Default::default()
    };
    for (name, &want) in &cfg.dataset.episodes {
        let cond = known_condition(name)?;
        let seed = training_seed(cfg, name);
        let (mut next, mut got) = (0, 0);
        while got < want {
            // Generous cap: the gate below fails long before this.
            if next >= 2 * want + 20 {
                return Err(PipelineError::Gate(format!("{name}: only {got} of {want} episodes after {next} attempts")));
            }
            let need = want - got;
            let batch = scenario_range(&mut maps, &cond, next, need, seed, cfg)?;
            next += need;
            let (eps, rej) = collect_demos(&batch, cfg.expert, &cfg.world, &cfg.episode)?;
            log::info!("collect {name}: {} of {} accepted", rej.accepted, rej.attempted);
            got += eps.len();
            episodes.extend(eps);
            report.attempted += rej.attempted;
            report.rejected.extend(rej.rejected);
        }
    }
    report.accepted = episodes.len();
    report.expert_rate = report.accepted as f64 / report.attempted.max(1) as f64;
    report.gate_passed = report.expert_rate >= GATE_MIN_RG;
    if !report.gate_passed {
        return Err(PipelineError::Gate(format!(
            "expert succeeded on {:.1}% of scenarios, needs {:.0}%",
            100.0 * report.expert_rate,
            100.0 * GATE_MIN_RG
        )));
    }
    let archive = DemoArchive::new(cfg.seed, &report.config_hash, cfg.world.history_k, cfg.world.lidar.beams, episodes);
    Ok((archive, report))
}

pub fn dataset(cfg: &RunConfig, archive: &DemoArchive) -> Result<Dataset> {
    if archive.header.beams != cfg.world.lidar.beams || archive.header.history_k != cfg.world.history_k {
        return Err(ConfigError(format!(
            "archive holds {} beams and k = {}, config wants {} and {}",
            archive.header.beams, archive.header.history_k, cfg.world.lidar.beams, cfg.world.history_k
        ))
        .into());
    }
    Ok(build_dataset(archive, derive_seed(cfg.seed, "split"), &cfg.world)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    One,
    Two,
    Three,
    Tc,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::One, Stage::Two, Stage::Three, Stage::Tc];

    pub fn name(self) -> &'static str {
        match self {
            Stage::One => "1",
            Stage::Two => "2",
            Stage::Three => "3",
            Stage::Tc => "tc",
        }
    }

    /// Checkpoint written by the stage.
    pub fn checkpoint(self) -> &'static str {
        match self {
            Stage::One => "gc.ckpt",
            Stage::Two => "planner.ckpt",
            Stage::Three => "policy.ckpt",
            Stage::Tc => "tc.ckpt",
        }
    }

    pub fn manifest(self) -> String {
        format!("manifest_stage{}.tsv", self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| format!("unknown stage {s}"))
    }
}

fn ckpt_err(path: &Path, e: NnError) -> PipelineError {
    PipelineError::Checkpoint {
        path: path.display().to_string(),
        what: e.to_string(),
    }
}

pub fn load_baseline(cfg: &RunConfig, kind: BaselineKind, path: &Path) -> Result<ConcatNet> {
    ConcatNet::load(kind, cfg.arch(), path).map_err(|e| ckpt_err(path, e))
}

pub fn load_policy_nets(cfg: &RunConfig, path: &Path) -> Result<PolicyNets> {
    PolicyNets::load(cfg.arch(), path).map_err(|e| ckpt_err(path, e))
}

fn last_good(path: &Path) -> PathBuf {
    path.with_extension("lastgood.ckpt")
}

/// Runs one training stage with its prerequisites read from `ckpt_dir`,
/// then writes the stage checkpoint and loss manifest there. After a numeric
/// fault the best weights so far go to `<checkpoint>.lastgood.ckpt`.
pub fn train_stage(cfg: &RunConfig, stage: Stage, data: &Dataset, ckpt_dir: &Path) -> Result<StageReport> {
    let path = ckpt_dir.join(stage.checkpoint());
    std::fs::create_dir_all(ckpt_dir).map_err(|e| io_err(ckpt_dir, e))?;
    let save_err = |e: NnError| ckpt_err(&path, e);
    let seed = cfg.seed;
    let arch = cfg.arch();
    let report = match stage {
        Stage::One | Stage::Tc => {
            let (kind, tag) = match stage {
                Stage::One => (BaselineKind::Gc, "gc"),
                _ => (BaselineKind::Tc, "tc"),
            };
            let mut net = ConcatNet::new(kind, arch, derive_seed(seed, tag)).map_err(TrainError::from)?;
            if stage == Stage::Tc {
                let gc = load_baseline(cfg, BaselineKind::Gc, &ckpt_dir.join(Stage::One.checkpoint()))?;
                crate::training::stages::transfer_lidar(&gc.store, &mut net.store).map_err(TrainError::from)?;
            }
            match train_baseline(&mut net, data, &cfg.train, seed) {
                Ok(r) => {
                    net.save(&path).map_err(save_err)?;
                    r
                }
                Err(e) => {
                    if matches!(e, TrainError::NumericFault { .. }) {
                        net.save(&last_good(&path)).map_err(save_err)?;
                    }
                    return Err(e.into());
                }
            }
        }
        Stage::Two | Stage::Three => {
            let mut nets = match stage {
                Stage::Two => PolicyNets::new(arch, derive_seed(seed, "policy")).map_err(TrainError::from)?,
                _ => load_policy_nets(cfg, &ckpt_dir.join(Stage::Two.checkpoint()))?,
            };
            let result = if stage == Stage::Two {
                let gc = load_baseline(cfg, BaselineKind::Gc, &ckpt_dir.join(Stage::One.checkpoint()))?;
                train_stage2(&mut nets, &gc, data, &cfg.train, seed)
            } else {
                train_stage3(&mut nets, data, &cfg.train, seed)
            };
            match result {
                Ok(r) => {
                    nets.save(&path).map_err(save_err)?;
                    r
                }
                Err(e) => {
                    if matches!(e, TrainError::NumericFault { .. }) {
                        nets.save(&last_good(&path)).map_err(save_err)?;
                    }
                    return Err(e.into());
                }
            }
        }
    };
    write_file(&ckpt_dir.join(stage.manifest()), report.manifest())?;
    log::info!(
        "stage {}: best epoch {} of {}, val {:.4e} (epoch 1: {:.4e}), {:.0} s",
        stage.name(),
        report.best_epoch,
        report.epochs.len(),
        report.best_val,
        report.first_val(),
        report.wall_seconds
    );
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Proposed,
    Gc,
    Tc,
    Expert,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::Proposed, PolicyKind::Gc, PolicyKind::Tc, PolicyKind::Expert];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Proposed => "proposed",
            PolicyKind::Gc => "gc",
            PolicyKind::Tc => "tc",
            PolicyKind::Expert => "expert",
        }
    }

    fn checkpoint(self) -> Option<&'static str> {
        match self {
            PolicyKind::Proposed => Some(Stage::Three.checkpoint()),
            PolicyKind::Gc => Some(Stage::One.checkpoint()),
            PolicyKind::Tc => Some(Stage::Tc.checkpoint()),
            PolicyKind::Expert => None,
        }
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        PolicyKind::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| format!("unknown policy {s}"))
    }
}

pub enum LoadedPolicy {
    Proposed(PolicyNets),
    Baseline(ConcatNet),
    Expert(crate::expert::ExpertParams),
}

impl LoadedPolicy {
    pub fn controller(&self) -> Controller<'_> {
        match self {
            LoadedPolicy::Proposed(n) => Controller::Proposed(n),
            LoadedPolicy::Baseline(n) => Controller::Baseline(n),
            LoadedPolicy::Expert(p) => Controller::Expert(*p),
        }
    }
}

/// Loads a policy; `ckpt` overrides the default file in `ckpt_dir`.
pub fn load_policy(cfg: &RunConfig, kind: PolicyKind, ckpt_dir: &Path, ckpt: Option<&Path>) -> Result<LoadedPolicy> {
    let path = match (ckpt, kind.checkpoint()) {
        (_, None) => return Ok(LoadedPolicy::Expert(cfg.expert)),
        (Some(p), _) => p.to_path_buf(),
        (None, Some(name)) => ckpt_dir.join(name),
    };
    Ok(match kind {
        PolicyKind::Proposed => LoadedPolicy::Proposed(load_policy_nets(cfg, &path)?),
        PolicyKind::Gc => LoadedPolicy::Baseline(load_baseline(cfg, BaselineKind::Gc, &path)?),
        PolicyKind::Tc => LoadedPolicy::Baseline(load_baseline(cfg, BaselineKind::Tc, &path)?),
        PolicyKind::Expert => unreachable!(),
    })
}

/// Runs every scenario (concurrently when enabled); logs follow scenario order.
pub fn evaluate(cfg: &RunConfig, policy: &LoadedPolicy, scenarios: &ScenarioSet) -> Result<Vec<EpisodeLog>> {
    let ctrl = policy.controller();
    par::map(scenarios, |(map, s)| run_episode(map.clone(), s, ctrl, &cfg.world, &cfg.episode))
        .into_iter()
        .map(|r| r.map_err(PipelineError::from))
        .collect()
}

pub fn write_scenarios(dir: &Path, set: &ScenarioSet) -> Result<()> {
    for (_, s) in set {
        write_file(&dir.join(format!("{}.json", scenario_id(s))), s.to_json())?;
    }
    Ok(())
}

pub fn read_scenarios(maps: &mut Maps, dir: &Path) -> Result<ScenarioSet> {
    let mut out = Vec::new();
    for path in json_files(dir)? {
        let s = Scenario::from_json(&read_file(&path)?).map_err(|e| io_err(&path, e))?;
        out.push((maps.get(&s.map_ref)?, s));
    }
    Ok(out)
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn write_logs(dir: &Path, logs: &[EpisodeLog]) -> Result<()> {
    for log in logs {
        let text = serde_json::to_string(log).expect("log serializes");
        write_file(&dir.join(format!("{}.json", log.scenario)), text)?;
    }
    Ok(())
}

pub fn read_logs(dir: &Path) -> Result<Vec<EpisodeLog>> {
    json_files(dir)?
        .into_iter()
        .map(|p| serde_json::from_str(&read_file(&p)?).map_err(|e| io_err(&p, e)))
        .collect()
}

/// Largest actuated command magnitudes across logs.
pub fn max_command(logs: &[EpisodeLog]) -> (f64, f64) {
    logs.iter()
        .flat_map(|l| &l.ticks)
        .fold((0.0, 0.0), |(v, w), t| (f64::max(v, t.cmd.v.abs()), f64::max(w, t.cmd.w.abs())))
}

pub fn commands_within_limits(logs: &[EpisodeLog]) -> bool {
    let (v, w) = max_command(logs);
    v <= MAX_LINEAR && w <= MAX_ANGULAR
}

/// Reached-goal percentage over a set of logs.
pub fn reached_pct(logs: &[&EpisodeLog]) -> f64 {
    let n = logs.len().max(1) as f64;
    100.0 * logs.iter().filter(|l| l.outcome == crate::eval::episode::Outcome::Reached).count() as f64 / n
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    pub seed: u64,
    /// Overall reached-goal percentage per policy.
    pub rg: BTreeMap<String, f64>,
    /// Pedestrian-collision events per policy.
    pub pc: BTreeMap<String, usize>,
    pub rg_at_least_70: bool,
    pub rg_beats_baselines: bool,
    pub pc_not_above_tc: bool,
}

/// Qualitative ordering checks of one evaluation round.
pub fn trend_check(seed: u64, logs: &[EpisodeLog]) -> TrendCheck {
    let mut rg = BTreeMap::new();
    let mut pc = BTreeMap::new();
    for p in PolicyKind::ALL {
        let mine: Vec<&EpisodeLog> = logs.iter().filter(|l| l.policy == p.name()).collect();
        if mine.is_empty() {
            continue;
        }
        rg.insert(p.name().to_string(), reached_pct(&mine));
        let events: usize = mine.iter().map(|l| crate::eval::metrics::episode_events(l).1).sum();
        pc.insert(p.name().to_string(), events);
    }
    let get = |m: &BTreeMap<String, f64>, k: &str| m.get(k).copied().unwrap_or(f64::NAN);
    let prop = get(&rg, "proposed");
    TrendCheck {
        seed,
        rg_at_least_70: prop >= 70.0,
        rg_beats_baselines: prop >= get(&rg, "tc") && prop >= get(&rg, "gc"),
        pc_not_above_tc: match (pc.get("proposed"), pc.get("tc")) {
            (Some(a), Some(b)) => a <= b,
            _ => false,
        },
        rg,
        pc,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub trends: Vec<TrendCheck>,
    pub majority_rg_at_least_70: bool,
    pub majority_rg_beats_baselines: bool,
    pub majority_pc_not_above_tc: bool,
    pub attention: Option<AttentionCorrelation>,
    pub max_v: f64,
    pub max_w: f64,
}

impl RunSummary {
    pub fn new(config_hash: String, trends: Vec<TrendCheck>, logs: &[EpisodeLog]) -> Self {
        let majority = |f: &dyn Fn(&TrendCheck) -> bool| 2 * trends.iter().filter(|t| f(t)).count() > trends.len();
        let proposed: Vec<EpisodeLog> = logs.iter().filter(|l| l.policy == "proposed").cloned().collect();
        let (max_v, max_w) = max_command(logs);
        Self {
            config_hash,
            majority_rg_at_least_70: majority(&|t| t.rg_at_least_70),
            majority_rg_beats_baselines: majority(&|t| t.rg_beats_baselines),
            majority_pc_not_above_tc: majority(&|t| t.pc_not_above_tc),
            attention: (!proposed.is_empty()).then(|| attention_correlation(&proposed)),
            trends,
            max_v,
            max_w,
        }
    }

    /// Human-readable lines, with flags on failed ordering checks.
    pub fn text(&self) -> String {
        let mut s = format!("config {}\n", self.config_hash);
        for t in &self.trends {
            s.push_str(&format!("eval seed {}: RG {:?} PC {:?}\n", t.seed, t.rg, t.pc));
        }
        let flag = |ok: bool| if ok { "ok" } else { "FLAG" };
        s.push_str(&format!("RG(proposed) >= 70% (majority): {}\n", flag(self.majority_rg_at_least_70)));
        s.push_str(&format!("RG(proposed) >= RG(TC), RG(GC) (majority): {}\n", flag(self.majority_rg_beats_baselines)));
        s.push_str(&format!("PC(proposed) <= PC(TC) (majority): {}\n", flag(self.majority_pc_not_above_tc)));
        if let Some(a) = &self.attention {
            s.push_str(&format!(
                "b_r near obstacles {:.4} vs open {:.4}: {}\nb_g near goal {:.4} vs elsewhere {:.4}: {}\n",
                a.br_near,
                a.br_open,
                flag(a.lidar_holds()),
                a.bg_goal,
                a.bg_elsewhere,
                flag(a.goal_holds())
            ));
        }
        s.push_str(&format!("max |v| {:.4} max |w| {:.4}\n", self.max_v, self.max_w));
        s
    }
}

/// Directory layout of a run under `--out`.
pub struct RunDirs {
    pub root: PathBuf,
}

impl RunDirs {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }
    pub fn demos(&self) -> PathBuf {
        self.root.join("demos.snda")
    }
    pub fn collect_report(&self) -> PathBuf {
        self.root.join("collect_report.json")
    }
    pub fn ckpt(&self) -> PathBuf {
        self.root.join("ckpt")
    }
    pub fn eval(&self, seed: u64) -> PathBuf {
        self.root.join("eval").join(format!("seed{seed}"))
    }
    pub fn logs(&self, seed: u64, policy: PolicyKind) -> PathBuf {
        self.eval(seed).join("logs").join(policy.name())
    }
    pub fn report(&self, seed: u64) -> PathBuf {
        self.root.join("report").join(format!("seed{seed}"))
    }
}

/// Runs collection if its archive is missing, then every training stage
/// whose checkpoint is missing, then evaluation and reports for every
/// evaluation seed. Returns the summary written to `summary.json`.
pub fn run_pipeline(cfg: &RunConfig, dirs: &RunDirs) -> Result<RunSummary> {
    write_file(&dirs.root.join("config.toml"), cfg.to_toml())?;
    let archive = if dirs.demos().exists() {
        let a = DemoArchive::read(&dirs.demos())?;
        if a.header.config_hash != cfg.hash() {
            return Err(ConfigError(format!("{} was collected with a different config", dirs.demos().display())).into());
        }
        a
    } else {
        let (a, report) = collect(cfg)?;
        a.write(&dirs.demos())?;
        write_file(&dirs.collect_report(), serde_json::to_string_pretty(&report).expect("serializes"))?;
        a
    };
    let data = dataset(cfg, &archive)?;
    drop(archive);
    log::info!("dataset: {} train, {} validation samples", data.train.len(), data.val.len());
    for stage in Stage::ALL {
        if dirs.ckpt().join(stage.checkpoint()).exists() {
            continue;
        }
        let r = train_stage(cfg, stage, &data, &dirs.ckpt())?;
        // Appended per stage so that an interrupted run keeps what it measured.
        let path = dirs.root.join("timing.txt");
        let prev = std::fs::read_to_string(&path).unwrap_or_default();
        write_file(&path, format!("{prev}stage {} {:.1} s {} epochs\n", stage.name(), r.wall_seconds, r.epochs.len()))?;
    }
    drop(data);
    let mut maps = Maps::default();
    let mut trends = Vec::new();
    let mut all_logs = Vec::new();
    for &seed in &cfg.eval.seeds {
        let scenarios = eval_scenarios(&mut maps, cfg, seed)?;
        write_scenarios(&dirs.eval(seed).join("scenarios"), &scenarios)?;
        let mut logs = Vec::new();
        for kind in PolicyKind::ALL {
            let dir = dirs.logs(seed, kind);
            let l = if dir.exists() {
                read_logs(&dir)?
            } else {
                let policy = load_policy(cfg, kind, &dirs.ckpt(), None)?;
                let l = evaluate(cfg, &policy, &scenarios)?;
                write_logs(&dir, &l)?;
                l
            };
            logs.extend(l);
        }
        let lookup: BTreeMap<String, (Arc<GridMap>, Scenario)> =
            scenarios.into_iter().map(|(m, s)| (scenario_id(&s), (m, s))).collect();
        emit_reports(&logs, &lookup, cfg.world.lidar.r_max, &dirs.report(seed)).map_err(|e| io_err(&dirs.report(seed), e))?;
        trends.push(trend_check(seed, &logs));
        all_logs.extend(logs);
    }
    let summary = RunSummary::new(cfg.hash(), trends, &all_logs);
    write_file(&dirs.root.join("summary.txt"), summary.text())?;
    write_file(&dirs.root.join("summary.json"), serde_json::to_string_pretty(&summary).expect("serializes"))?;
    Ok(summary)
}
