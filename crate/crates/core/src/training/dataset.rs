//! Training samples with future-pose labels and the episode-level split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::policy::{PolicyInput, LOCAL_PLAN_LEN, LOCAL_POSES};
use crate::worldsim::{Twist, WorldConfig};

use super::archive::{DemoArchive, DemoEpisode, DemoRecord};
use super::TrainError;

/// Spacing of the label poses, s.
pub const LABEL_SPACING: f64 = 1.0;
pub const VALIDATION_FRACTION: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    /// Index of the source episode in the archive.
    pub episode: usize,
    pub input: PolicyInput,
    pub subgoal: [f64; 2],
    pub label_cmd: Twist,
    pub label_plan: [f64; LOCAL_PLAN_LEN],
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub train: Vec<TrainSample>,
    pub val: Vec<TrainSample>,
    pub train_episodes: Vec<usize>,
    pub val_episodes: Vec<usize>,
}

/// Records per label interval.
pub fn label_stride(cfg: &WorldConfig) -> usize {
    (LABEL_SPACING / (cfg.dt * cfg.history_every as f64)).round() as usize
}

/// Poses at `+1 … +5` label intervals in the frame of record `i`, or `None`
/// when the episode ends first.
pub fn label_plan(records: &[DemoRecord], i: usize, stride: usize) -> Option<[f64; LOCAL_PLAN_LEN]> {
    let origin = records[i].pose;
    let mut out = [0.0; LOCAL_PLAN_LEN];
    for j in 0..LOCAL_POSES {
        let p = origin.relative(&records.get(i + (j + 1) * stride)?.pose);
        out[4 * j..4 * j + 4].copy_from_slice(&[p.x, p.y, p.theta.cos(), p.theta.sin()]);
    }
    Some(out)
}

/// All labelled samples of one episode; the last five seconds yield none.
pub fn episode_samples(ep: &DemoEpisode, index: usize, cfg: &WorldConfig) -> Result<Vec<TrainSample>, TrainError> {
    let stride = label_stride(cfg);
    for w in ep.records.windows(2) {
        if w[1].step != w[0].step + cfg.history_every {
            return Err(TrainError::Archive {
                record: None,
                what: format!("{}: records at steps {} and {} are not consecutive", ep.scenario, w[0].step, w[1].step),
            });
        }
    }
    let r_max = cfg.lidar.r_max;
    Ok((0..ep.records.len())
        .map_while(|i| {
            let label = label_plan(&ep.records, i, stride)?;
            let r = &ep.records[i];
            Some(TrainSample {
                episode: index,
                input: PolicyInput {
                    plan: r.plan.clone(),
                    lidar: r.ranges.iter().map(|x| x / r_max).collect(),
                    odom: [r.odom.v, r.odom.w],
                    humans: r.humans.clone(),
                },
                subgoal: r.subgoal,
                label_cmd: r.expert_cmd,
                label_plan: label,
            })
        })
        .collect())
}

/// Labels every episode and splits 90/10 by episode with a seeded shuffle.
pub fn build_dataset(archive: &DemoArchive, seed: u64, cfg: &WorldConfig) -> Result<Dataset, TrainError> {
    let n = archive.episodes.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = if n < 2 { 0 } else { ((n as f64 * VALIDATION_FRACTION).round() as usize).max(1) };
    let mut ds = Dataset {
        val_episodes: order[..n_val].to_vec(),
        train_episodes: order[n_val..].to_vec(),
        ..Default::default()
    };
    ds.val_episodes.sort_unstable();
    ds.train_episodes.sort_unstable();
    for &i in &ds.train_episodes {
        ds.train.extend(episode_samples(&archive.episodes[i], i, cfg)?);
    }
    for &i in &ds.val_episodes {
        ds.val.extend(episode_samples(&archive.episodes[i], i, cfg)?);
    }
    if ds.train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    Ok(ds)
}
