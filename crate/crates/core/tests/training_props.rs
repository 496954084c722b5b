//! Stage contracts of the training pipeline on small synthetic datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use socnav::baselines::{BaselineKind, ConcatNet};
use socnav::nn::{encode_checkpoint, AdamConfig};
use socnav::policy::{PolicyArch, PolicyInput, PolicyNets, LOCAL_PLAN_LEN, PLAN_LEN};
use socnav::training::stages::transfer_lidar;
use socnav::training::{train_baseline, train_stage2, train_stage3, Dataset, TrainConfig, TrainSample};
use socnav::worldsim::Twist;

const ARCH: PolicyArch = PolicyArch { beams: 24, history_k: 3 };

fn sample(episode: usize, zero_labels: bool, rng: &mut impl Rng) -> TrainSample {
    let people = rng.gen_range(0..4);
    let mut r = |lo: f64, hi: f64| rng.gen_range(lo..hi);
    let input = PolicyInput {
        plan: (0..PLAN_LEN).map(|_| r(-3.0, 3.0)).collect(),
        lidar: (0..ARCH.beams).map(|_| r(0.0, 1.0)).collect(),
        odom: [r(0.0, 0.5), r(-1.0, 1.0)],
        humans: (0..people).map(|_| (0..2 * ARCH.history_k).map(|_| r(-4.0, 4.0)).collect()).collect(),
    };
    let label_plan = if zero_labels { [0.0; LOCAL_PLAN_LEN] } else { std::array::from_fn(|_| r(-1.0, 1.0)) };
    TrainSample {
        episode,
        input,
        subgoal: [r(-2.0, 2.0), r(-2.0, 2.0)],
        label_cmd: Twist { v: r(0.0, 0.5), w: r(-1.0, 1.0) },
        label_plan,
    }
}

fn synthetic(zero_labels: bool, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dataset {
        train: (0..40).map(|i| sample(i / 4, zero_labels, &mut rng)).collect(),
        val: (0..8).map(|i| sample(10 + i / 4, zero_labels, &mut rng)).collect(),
        train_episodes: (0..10).collect(),
        val_episodes: vec![10, 11],
    }
}

fn cfg(epochs: usize, lr: f64) -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        max_epochs: epochs,
        patience: 0,
        adam: AdamConfig { lr, ..Default::default() },
    }
}

fn bytes_with_prefix(store: &socnav::nn::ParamStore, keep: impl Fn(&str) -> bool) -> Vec<(String, Vec<u64>)> {
    store
        .iter()
        .filter(|(n, _)| keep(n))
        .map(|(n, t)| (n.to_string(), t.data().iter().map(|x| x.to_bits()).collect()))
        .collect()
}

#[test]
fn planner_fits_all_zero_labels() {
    let data = synthetic(true, 1);
    let stage1 = ConcatNet::new(BaselineKind::Gc, ARCH, 2).unwrap();
    let mut nets = PolicyNets::new(ARCH, 3).unwrap();
    let r = train_stage2(&mut nets, &stage1, &data, &cfg(150, 1e-3), 4).unwrap();
    assert!(r.best_val < 1e-3, "validation loss {}", r.best_val);
}

#[test]
fn controller_stage_leaves_planner_bits_alone() {
    let data = synthetic(false, 5);
    let mut nets = PolicyNets::new(ARCH, 6).unwrap();
    let planner_names: Vec<String> = nets.planner_params().iter().map(|&id| nets.store.name(id).to_string()).collect();
    let is_planner = |n: &str| planner_names.iter().any(|p| p == n);
    let before_planner = bytes_with_prefix(&nets.store, is_planner);
    let before_ctrl = bytes_with_prefix(&nets.store, |n| !is_planner(n));
    train_stage3(&mut nets, &data, &cfg(3, 1e-3), 7).unwrap();
    assert_eq!(bytes_with_prefix(&nets.store, is_planner), before_planner);
    assert_ne!(bytes_with_prefix(&nets.store, |n| !is_planner(n)), before_ctrl);
}

#[test]
fn lidar_encoder_survives_checkpoint_and_transfer() {
    let data = synthetic(false, 8);
    let mut gc = ConcatNet::new(BaselineKind::Gc, ARCH, 9).unwrap();
    train_baseline(&mut gc, &data, &cfg(2, 1e-3), 10).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gc.ckpt");
    gc.save(&path).unwrap();
    let loaded = ConcatNet::load(BaselineKind::Gc, ARCH, &path).unwrap();
    assert_eq!(encode_checkpoint(&loaded.store), encode_checkpoint(&gc.store));

    let lidar = |n: &str| n.starts_with("lidar.");
    let mut nets = PolicyNets::new(ARCH, 11).unwrap();
    transfer_lidar(&loaded.store, &mut nets.store).unwrap();
    assert_eq!(bytes_with_prefix(&nets.store, lidar), bytes_with_prefix(&gc.store, lidar));
    // The transferred encoder yields identical features in both networks.
    let mut tc = ConcatNet::new(BaselineKind::Tc, ARCH, 12).unwrap();
    transfer_lidar(&gc.store, &mut tc.store).unwrap();
    assert_eq!(bytes_with_prefix(&tc.store, lidar), bytes_with_prefix(&gc.store, lidar));
}

#[test]
fn fixed_seed_gives_identical_checkpoints() {
    let run = || {
        let data = synthetic(false, 13);
        let mut gc = ConcatNet::new(BaselineKind::Gc, ARCH, 14).unwrap();
        train_baseline(&mut gc, &data, &cfg(2, 1e-3), 15).unwrap();
        let mut nets = PolicyNets::new(ARCH, 16).unwrap();
        train_stage2(&mut nets, &gc, &data, &cfg(2, 1e-3), 17).unwrap();
        train_stage3(&mut nets, &data, &cfg(2, 1e-3), 18).unwrap();
        (encode_checkpoint(&gc.store), encode_checkpoint(&nets.store))
    };
    assert_eq!(run(), run());
}
