//! Concatenation baselines. GC sees lidar and a 2 m subgoal, TC sees lidar
//! and the ten-waypoint plan. Both reuse the proposed lidar encoder and fuse
//! by plain concatenation before a velocity head of the controller's shape.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::global_planner::{point_ahead, FullPlan};
use crate::nn::{self, Grads, Mlp, MlpCache, NnError, ParamStore, Tensor};
use crate::policy::{concat_cols, split_cols, LidarCache, LidarEncoder, PolicyArch, PolicyInput, FEATURE_DIM, PLAN_LEN};
use crate::worldsim::{Pose2D, Twist, Vec2};

/// Lead distance of the GC subgoal along the plan.
pub const SUBGOAL_LEAD: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Gc,
    Tc,
}

impl BaselineKind {
    pub fn prefix(self) -> &'static str {
        match self {
            BaselineKind::Gc => "gc",
            BaselineKind::Tc => "tc",
        }
    }

    pub fn aux_len(self) -> usize {
        match self {
            BaselineKind::Gc => 2,
            BaselineKind::Tc => PLAN_LEN,
        }
    }
}

/// GC subgoal in the robot frame: 2 m of plan ahead, or the goal when close.
pub fn subgoal(full: &FullPlan, pose: &Pose2D, goal: Vec2) -> [f64; 2] {
    let p = pose.to_local(point_ahead(full, pose.position(), goal, SUBGOAL_LEAD));
    [p.x, p.y]
}

/// Conditioning vector for `kind`: the subgoal for GC, the flattened plan for TC.
pub fn aux_input(kind: BaselineKind, input: &PolicyInput, subgoal: [f64; 2]) -> Vec<f64> {
    match kind {
        BaselineKind::Gc => subgoal.to_vec(),
        BaselineKind::Tc => input.plan.clone(),
    }
}

#[derive(Clone, Debug)]
pub struct ConcatNet {
    pub store: ParamStore,
    pub arch: PolicyArch,
    pub kind: BaselineKind,
    pub lidar: LidarEncoder,
    pub aux: Mlp,
    pub head: Mlp,
}

#[derive(Clone, Debug)]
pub struct ConcatCache {
    pub lidar: LidarCache,
    pub aux: MlpCache,
    pub head: MlpCache,
}

impl ConcatCache {
    pub fn velocity(&self) -> &Tensor {
        self.head.output()
    }
}

impl ConcatNet {
    pub fn new(kind: BaselineKind, arch: PolicyArch, seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = FEATURE_DIM;
        let p = kind.prefix();
        let lidar = LidarEncoder::new(&mut store, arch.beams, &mut rng)?;
        let aux = Mlp::new(&mut store, &format!("{p}.aux"), &[kind.aux_len(), 32, d], true, &mut rng);
        let head = Mlp::new(&mut store, &format!("{p}.head"), &[2 * d, 512, 128, 32, 2], false, &mut rng);
        Ok(Self {
            store,
            arch,
            kind,
            lidar,
            aux,
            head,
        })
    }

    /// `lidar: [1, B, M]`, `aux: [B, aux_len]`.
    pub fn forward(&self, lidar: Tensor, aux: Tensor) -> Result<ConcatCache, NnError> {
        let s = &self.store;
        let lidar = self.lidar.forward(s, lidar)?;
        let aux = self.aux.forward(s, aux)?;
        let fused = concat_cols(&[&lidar.out, aux.output()])?;
        let head = self.head.forward(s, fused)?;
        Ok(ConcatCache { lidar, aux, head })
    }

    pub fn backward(&self, c: &ConcatCache, d_vel: Tensor, grads: &mut Grads) -> Result<(), NnError> {
        let s = &self.store;
        let d_fused = self.head.backward(s, &c.head, d_vel, grads, true).unwrap();
        let mut parts = split_cols(&d_fused, 2).into_iter();
        let (dr, da) = (parts.next().unwrap(), parts.next().unwrap());
        self.lidar.backward(s, &c.lidar, dr, grads)?;
        self.aux.backward(s, &c.aux, da, grads, false);
        Ok(())
    }

    /// Returns `(clamped, raw)` commands.
    pub fn act(&self, lidar: &[f64], aux: &[f64]) -> Result<(Twist, Twist), NnError> {
        let x = Tensor::new(&[1, 1, lidar.len()], lidar.to_vec())?;
        let a = Tensor::new(&[1, aux.len()], aux.to_vec())?;
        let c = self.forward(x, a)?;
        c.velocity().check_finite("baseline output")?;
        let v = c.velocity().row(0);
        let raw = Twist::new(v[0], v[1]);
        Ok((raw.clamped(), raw))
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        nn::save_checkpoint(&self.store, path)
    }

    pub fn load(kind: BaselineKind, arch: PolicyArch, path: &Path) -> Result<Self, NnError> {
        let mut net = Self::new(kind, arch, 0)?;
        let entries = nn::load_checkpoint(path)?;
        if entries.len() != net.store.len() {
            return Err(NnError::Checkpoint(format!(
                "{} holds {} tensors, {:?} baseline expects {}",
                path.display(),
                entries.len(),
                kind,
                net.store.len()
            )));
        }
        net.store.assign(&entries)?;
        Ok(net)
    }
}
