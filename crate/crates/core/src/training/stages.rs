//! The staged behavioral-cloning procedure.
//!
//! 1. GC network on `(lidar, subgoal) -> cmd`; its lidar encoder seeds stage 2.
//! 2. Local planner on `s -> L`, lidar encoder fine-tuned.
//! 3. Velocity controller on `(L, f_r, f_g) -> cmd` with the planner frozen.
//!
//! The TC baseline trains like stage 1 on `(lidar, G)`, starting from the
//! stage-1 lidar encoder. Every stage uses a fresh Adam state, L2 loss and
//! keeps the weights of its best validation epoch.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{aux_input, BaselineKind, ConcatNet};
use crate::nn::ops::l2_loss;
use crate::nn::{AdamConfig, Grads, NnError, ParamId, ParamStore, Tensor};
use crate::policy::{PolicyArch, PolicyBatch, PolicyInput, PolicyNets, FEATURE_DIM, LOCAL_PLAN_LEN};

use super::dataset::{Dataset, TrainSample};
use super::TrainError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation improvement; 0 never stops early.
    pub patience: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 300,
            max_epochs: 100,
            patience: 12,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err("batch_size and max_epochs must be positive".into());
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && a.eps > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2)) {
            return Err("invalid Adam settings".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub train_samples: usize,
    pub val_samples: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val: f64,
    pub stopped_early: bool,
    /// Host time, s. Not part of the manifest.
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl StageReport {
    /// Per-epoch loss table, one line per epoch.
    pub fn manifest(&self) -> String {
        let mut s = format!(
            "# stage {} train_samples {} val_samples {} best_epoch {} best_val {:e}{}\nepoch\ttrain_loss\tval_loss\n",
            self.stage,
            self.train_samples,
            self.val_samples,
            self.best_epoch,
            self.best_val,
            if self.stopped_early { " stopped_early" } else { "" }
        );
        for e in &self.epochs {
            s.push_str(&format!("{}\t{:e}\t{:e}\n", e.epoch, e.train_loss, e.val_loss));
        }
        s
    }

    pub fn first_val(&self) -> f64 {
        self.epochs.first().map_or(f64::NAN, |e| e.val_loss)
    }
}

/// A supervised objective over indexed training and validation samples.
trait Objective {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    /// Mean loss over the samples `idx` of one split; accumulates gradients when asked.
    fn loss(&self, val: bool, idx: &[usize], grads: Option<&mut Grads>) -> Result<f64, NnError>;
}

/// Stable per-stage seed from the run seed.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut z = seed ^ tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mean_loss(obj: &impl Objective, val: bool, n: usize, batch: usize) -> Result<f64, NnError> {
    let idx: Vec<usize> = (0..n).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch) {
        total += obj.loss(val, chunk, None)? * chunk.len() as f64;
    }
    Ok(total / n.max(1) as f64)
}

/// Generic epoch loop with best-validation selection. On a numeric fault the
/// best weights so far are restored before the error is returned.
fn fit(
    obj: &mut impl Objective,
    trainable: &[ParamId],
    n_train: usize,
    n_val: usize,
    cfg: &TrainConfig,
    stage: &str,
    seed: u64,
) -> Result<StageReport, TrainError> {
    if n_train == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let started = Instant::now();
    obj.store_mut().reset_optimizer();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stage));
    let snapshot = |s: &ParamStore| trainable.iter().map(|&id| s.get(id).clone()).collect::<Vec<Tensor>>();
    let mut best = (f64::INFINITY, 0usize, snapshot(obj.store()));
    let mut report = StageReport {
        stage: stage.to_string(),
        train_samples: n_train,
        val_samples: n_val,
        epochs: Vec::new(),
        best_epoch: 0,
        best_val: f64::INFINITY,
        stopped_early: false,
        wall_seconds: 0.0,
    };
    let mut order: Vec<usize> = (0..n_train).collect();
    let fault = |obj: &mut dyn ObjectiveStore, best: &(f64, usize, Vec<Tensor>), epoch: usize, e: NnError| {
        for (&id, t) in trainable.iter().zip(&best.2) {
            *obj.store_mut_dyn().get_mut(id) = t.clone();
        }
        TrainError::NumericFault {
            stage: stage.to_string(),
            epoch,
            what: e.to_string(),
        }
    };
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grads = obj.store().zero_grads();
            let step = obj
                .loss(false, chunk, Some(&mut grads))
                .and_then(|l| obj.store_mut().adam_step(&grads, &cfg.adam, Some(trainable)).map(|_| l));
            match step {
                Ok(l) if l.is_finite() => total += l * chunk.len() as f64,
                Ok(l) => return Err(fault(obj, &best, epoch, NnError::NumericFault(format!("training loss {l}")))),
                Err(e) => return Err(fault(obj, &best, epoch, e)),
            }
        }
        let train_loss = total / n_train as f64;
        // Without a validation split the training loss stands in for selection.
        let val_loss = if n_val > 0 {
            match mean_loss(obj, true, n_val, cfg.batch_size) {
                Ok(v) if v.is_finite() => v,
                Ok(v) => return Err(fault(obj, &best, epoch, NnError::NumericFault(format!("validation loss {v}")))),
                Err(e) => return Err(fault(obj, &best, epoch, e)),
            }
        } else {
            train_loss
        };
        log::info!("{stage} epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e}");
        report.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, snapshot(obj.store()));
        }
        if cfg.patience > 0 && epoch - best.1 >= cfg.patience {
            report.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    for (&id, t) in trainable.iter().zip(best.2) {
        *obj.store_mut().get_mut(id) = t;
    }
    report.best_epoch = best.1;
    report.best_val = best.0;
    report.wall_seconds = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Object-safe view used by the fault path.
trait ObjectiveStore {
    fn store_mut_dyn(&mut self) -> &mut ParamStore;
}

impl<T: Objective> ObjectiveStore for T {
    fn store_mut_dyn(&mut self) -> &mut ParamStore {
        self.store_mut()
    }
}

fn split(ds: &Dataset, val: bool) -> &[TrainSample] {
    if val {
        &ds.val
    } else {
        &ds.train
    }
}

fn cmd_target(samples: &[&TrainSample]) -> Tensor {
    let data = samples.iter().flat_map(|s| [s.label_cmd.v, s.label_cmd.w]).collect();
    Tensor::new(&[samples.len(), 2], data).expect("two columns")
}

struct BaselineObjective<'a> {
    net: &'a mut ConcatNet,
    data: &'a Dataset,
}

impl Objective for BaselineObjective<'_> {
    fn store(&self) -> &ParamStore {
        &self.net.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.net.store
    }

    fn loss(&self, val: bool, idx: &[usize], grads: Option<&mut Grads>) -> Result<f64, NnError> {
        let all = split(self.data, val);
        let samples: Vec<&TrainSample> = idx.iter().map(|&i| &all[i]).collect();
        let (lidar, aux) = baseline_batch(self.net.kind, &self.net.arch, &samples)?;
        let c = self.net.forward(lidar, aux)?;
        let (loss, d) = l2_loss(c.velocity(), &cmd_target(&samples))?;
        if let Some(g) = grads {
            self.net.backward(&c, d, g)?;
        }
        Ok(loss)
    }
}

/// Network inputs of a baseline for a batch of samples.
pub fn baseline_batch(kind: BaselineKind, arch: &PolicyArch, samples: &[&TrainSample]) -> Result<(Tensor, Tensor), NnError> {
    let b = samples.len();
    let lidar: Vec<f64> = samples.iter().flat_map(|s| s.input.lidar.iter().copied()).collect();
    let aux: Vec<f64> = samples.iter().flat_map(|s| aux_input(kind, &s.input, s.subgoal)).collect();
    Ok((Tensor::new(&[1, b, arch.beams], lidar)?, Tensor::new(&[b, kind.aux_len()], aux)?))
}

/// Trains a concatenation baseline. Stage 1 is the GC network.
pub fn train_baseline(net: &mut ConcatNet, data: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<StageReport, TrainError> {
    let ids: Vec<ParamId> = net.store.ids().collect();
    let stage = match net.kind {
        BaselineKind::Gc => "1",
        BaselineKind::Tc => "tc",
    };
    let mut obj = BaselineObjective { net, data };
    fit(&mut obj, &ids, data.train.len(), data.val.len(), cfg, stage, seed)
}

/// Copies the lidar encoder weights from a trained baseline.
pub fn transfer_lidar(from: &ParamStore, to: &mut ParamStore) -> Result<(), NnError> {
    let entries: Vec<(String, Tensor)> = from
        .iter()
        .filter(|(name, _)| name.starts_with("lidar."))
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect();
    if entries.is_empty() {
        return Err(NnError::Checkpoint("source holds no lidar encoder".into()));
    }
    to.assign(&entries)
}

struct PlannerObjective<'a> {
    nets: &'a mut PolicyNets,
    data: &'a Dataset,
}

fn policy_batch(samples: &[&TrainSample], arch: &PolicyArch) -> Result<PolicyBatch, NnError> {
    let inputs: Vec<&PolicyInput> = samples.iter().map(|s| &s.input).collect();
    PolicyBatch::new(&inputs, arch)
}

impl Objective for PlannerObjective<'_> {
    fn store(&self) -> &ParamStore {
        &self.nets.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.nets.store
    }

    fn loss(&self, val: bool, idx: &[usize], grads: Option<&mut Grads>) -> Result<f64, NnError> {
        let all = split(self.data, val);
        let samples: Vec<&TrainSample> = idx.iter().map(|&i| &all[i]).collect();
        let batch = policy_batch(&samples, &self.nets.arch)?;
        let p = self.nets.planner_forward(&batch)?;
        let target = Tensor::new(
            &[samples.len(), LOCAL_PLAN_LEN],
            samples.iter().flat_map(|s| s.label_plan).collect(),
        )?;
        let (loss, d) = l2_loss(p.plan(), &target)?;
        if let Some(g) = grads {
            self.nets.planner_backward(&p, d, g)?;
        }
        Ok(loss)
    }
}

/// Stage 2: the local planner, lidar encoder taken from stage 1.
pub fn train_stage2(nets: &mut PolicyNets, stage1: &ConcatNet, data: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<StageReport, TrainError> {
    transfer_lidar(&stage1.store, &mut nets.store)?;
    let ids = nets.planner_params();
    let mut obj = PlannerObjective { nets, data };
    fit(&mut obj, &ids, data.train.len(), data.val.len(), cfg, "2", seed)
}

/// Frozen-planner outputs of one split: `L`, `f_r`, `f_g` per sample.
struct FrozenFeatures {
    plan: Tensor,
    f_r: Tensor,
    f_g: Tensor,
}

fn frozen_features(nets: &PolicyNets, samples: &[TrainSample], batch: usize) -> Result<FrozenFeatures, NnError> {
    let n = samples.len();
    let mut plan = Vec::with_capacity(n * LOCAL_PLAN_LEN);
    let mut f_r = Vec::with_capacity(n * FEATURE_DIM);
    let mut f_g = Vec::with_capacity(n * FEATURE_DIM);
    for chunk in samples.chunks(batch) {
        let refs: Vec<&TrainSample> = chunk.iter().collect();
        let p = nets.planner_forward(&policy_batch(&refs, &nets.arch)?)?;
        plan.extend_from_slice(p.plan().data());
        f_r.extend_from_slice(p.f_r().data());
        f_g.extend_from_slice(p.f_g().data());
    }
    Ok(FrozenFeatures {
        plan: Tensor::new(&[n, LOCAL_PLAN_LEN], plan)?,
        f_r: Tensor::new(&[n, FEATURE_DIM], f_r)?,
        f_g: Tensor::new(&[n, FEATURE_DIM], f_g)?,
    })
}

fn gather(t: &Tensor, idx: &[usize]) -> Tensor {
    let c = t.cols();
    let data = idx.iter().flat_map(|&i| t.row(i).iter().copied()).collect();
    Tensor::new(&[idx.len(), c], data).expect("row gather")
}

struct ControllerObjective<'a> {
    nets: &'a mut PolicyNets,
    data: &'a Dataset,
    train: FrozenFeatures,
    val: FrozenFeatures,
}

impl Objective for ControllerObjective<'_> {
    fn store(&self) -> &ParamStore {
        &self.nets.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.nets.store
    }

    fn loss(&self, val: bool, idx: &[usize], grads: Option<&mut Grads>) -> Result<f64, NnError> {
        let all = split(self.data, val);
        let f = if val { &self.val } else { &self.train };
        let samples: Vec<&TrainSample> = idx.iter().map(|&i| &all[i]).collect();
        let c = self.nets.controller_forward(&gather(&f.plan, idx), &gather(&f.f_r, idx), &gather(&f.f_g, idx))?;
        let (loss, d) = l2_loss(c.velocity(), &cmd_target(&samples))?;
        if let Some(g) = grads {
            self.nets.controller_backward(&c, d, g, false);
        }
        Ok(loss)
    }
}

/// Stage 3: the velocity controller on top of the frozen planner. The
/// planner's outputs are computed once since its weights cannot change.
pub fn train_stage3(nets: &mut PolicyNets, data: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<StageReport, TrainError> {
    let train = frozen_features(nets, &data.train, cfg.batch_size)?;
    let val = frozen_features(nets, &data.val, cfg.batch_size)?;
    let ids = nets.controller_params();
    let mut obj = ControllerObjective { nets, data, train, val };
    fit(&mut obj, &ids, data.train.len(), data.val.len(), cfg, "3", seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A quadratic objective with a known minimum.
    struct Quad {
        store: ParamStore,
        id: ParamId,
        fail_at: Option<usize>,
        calls: std::cell::Cell<usize>,
    }

    impl Objective for Quad {
        fn store(&self) -> &ParamStore {
            &self.store
        }
        fn store_mut(&mut self) -> &mut ParamStore {
            &mut self.store
        }
        fn loss(&self, val: bool, _idx: &[usize], grads: Option<&mut Grads>) -> Result<f64, NnError> {
            if !val {
                self.calls.set(self.calls.get() + 1);
            }
            let x = self.store.get(self.id).data()[0];
            if let Some(g) = grads {
                let bad = self.fail_at.is_some_and(|k| self.calls.get() >= k);
                g.set(self.id, Tensor::vector(vec![if bad { f64::NAN } else { 2.0 * (x - 3.0) }]));
            }
            Ok((x - 3.0).powi(2))
        }
    }

    fn quad(fail_at: Option<usize>) -> Quad {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::vector(vec![0.0]));
        Quad {
            store,
            id,
            fail_at,
            calls: Default::default(),
        }
    }

    #[test]
    fn selects_best_epoch_and_batches_without_drop_last() {
        let mut q = quad(None);
        let cfg = TrainConfig {
            batch_size: 300,
            max_epochs: 30,
            patience: 0,
            adam: AdamConfig {
                lr: 0.5,
                ..Default::default()
            },
        };
        let id = q.id;
        let r = fit(&mut q, &[id], 299, 10, &cfg, "t", 1).unwrap();
        // 299 samples in batches of 300: one step per epoch.
        assert_eq!(q.store.adam_steps(), 30);
        let best = r.epochs.iter().min_by(|a, b| a.val_loss.total_cmp(&b.val_loss)).unwrap();
        assert_eq!(r.best_epoch, best.epoch);
        assert_eq!((q.store.get(q.id).data()[0] - 3.0).powi(2), best.val_loss);
        assert!(r.best_val <= r.epochs.last().unwrap().val_loss);
    }

    #[test]
    fn patience_stops_early() {
        let mut q = quad(None);
        let cfg = TrainConfig {
            batch_size: 10,
            max_epochs: 100,
            patience: 3,
            adam: AdamConfig {
                lr: 1.0,
                ..Default::default()
            },
        };
        let id = q.id;
        let r = fit(&mut q, &[id], 10, 10, &cfg, "t", 1).unwrap();
        assert!(r.stopped_early);
        assert_eq!(r.epochs.len(), r.best_epoch + 3);
    }

    #[test]
    fn numeric_fault_restores_last_good() {
        let mut q = quad(Some(5));
        let cfg = TrainConfig {
            batch_size: 10,
            max_epochs: 10,
            patience: 0,
            adam: AdamConfig {
                lr: 0.1,
                ..Default::default()
            },
        };
        let id = q.id;
        let e = fit(&mut q, &[id], 10, 10, &cfg, "t", 1).unwrap_err();
        assert!(matches!(e, TrainError::NumericFault { epoch: 5, .. }));
        // Best epoch so far is 4: four steps of ~0.1 each from 0.
        let x = q.store.get(q.id).data()[0];
        assert!(x > 0.3 && x < 0.45, "{x}");
    }
}
