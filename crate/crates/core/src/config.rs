//! Run configuration. One TOML file drives every CLI verb; anything left out
//! takes the canonical default.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eval::episode::EpisodeConfig;
use crate::eval::scenarios::condition;
use crate::expert::ExpertParams;
use crate::policy::PolicyArch;
use crate::training::TrainConfig;
use crate::worldsim::WorldConfig;

#[derive(Debug, Error)]
#[error("config: {0}")]
pub struct ConfigError(pub String);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Accepted demonstration episodes per condition.
    pub episodes: BTreeMap<String, usize>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let episodes = [("E1", 10), ("E2", 10), ("E3", 10), ("E4", 270)];
        Self {
            episodes: episodes.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Held-out scenarios per condition.
    pub scenarios: BTreeMap<String, usize>,
    /// One evaluation round per seed; trend checks use the majority.
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let scenarios = [("E4", 50), ("E6", 25), ("E7", 25)];
        Self {
            scenarios: scenarios.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            seeds: vec![1, 2, 3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub episode: EpisodeConfig,
    pub expert: ExpertParams,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            world: WorldConfig::default(),
            episode: EpisodeConfig::default(),
            expert: ExpertParams::default(),
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError(m));
        let w = &self.world;
        if !(w.dt > 0.0) || w.control_every == 0 || w.history_every == 0 || w.history_k == 0 {
            return bad("world timing must be positive".into());
        }
        if !(w.robot_radius > 0.0 && w.pedestrian_radius > 0.0) {
            return bad("radii must be positive".into());
        }
        if w.lidar.beams < 2 || !(w.lidar.r_max > 0.0) || !(w.lidar.fov_deg > 0.0 && w.lidar.fov_deg <= 360.0) {
            return bad("invalid lidar".into());
        }
        let e = &self.episode;
        if !(e.goal_tolerance > 0.0 && e.time_limit > 0.0 && e.failure_overlap >= 0.0) {
            return bad("invalid episode limits".into());
        }
        self.expert.validate().map_err(|e| ConfigError(e.to_string()))?;
        self.train.validate().map_err(ConfigError)?;
        for (what, table) in [("dataset", &self.dataset.episodes), ("eval", &self.eval.scenarios)] {
            if let Some(name) = table.keys().find(|k| condition(k).is_none()) {
                return bad(format!("{what}: unknown condition {name}"));
            }
            if table.values().sum::<usize>() == 0 {
                return bad(format!("{what}: no episodes"));
            }
        }
        if self.eval.seeds.is_empty() {
            return bad("eval.seeds is empty".into());
        }
        Ok(())
    }

    pub fn arch(&self) -> PolicyArch {
        PolicyArch {
            beams: self.world.lidar.beams,
            history_k: self.world.history_k,
        }
    }

    /// Hex sha256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
