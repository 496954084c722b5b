//! The learned local planner and velocity controller.
//!
//! Four encoders turn the plan `G`, lidar `R`, odometry `O` and pedestrian
//! histories `H` into 512-d features. An attention block weights and
//! concatenates them, and the plan head regresses five future poses `L`.
//! The controller re-encodes `L`, fuses it with the shared `f_r` and `f_g`
//! through a second attention block and regresses `(v, ω)`.

mod attention;
mod encoders;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use attention::{concat_cols, split_cols, Attention, AttentionCache};
pub use encoders::{HumanCache, HumanEncoder, LidarCache, LidarEncoder, FEATURE_DIM};

use crate::global_planner::{downsample, FullPlan, PLAN_POINTS};
use crate::nn::{self, Grads, Mlp, MlpCache, NnError, ParamId, ParamStore, Tensor};
use crate::worldsim::{raycast, LidarScan, Pose2D, Twist, Vec2, WorldState};

pub const PLAN_LEN: usize = 2 * PLAN_POINTS;
pub const LOCAL_POSES: usize = 5;
pub const LOCAL_PLAN_LEN: usize = 4 * LOCAL_POSES;

/// Input sizes that fix the network shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyArch {
    pub beams: usize,
    pub history_k: usize,
}

impl Default for PolicyArch {
    fn default() -> Self {
        Self {
            beams: 180,
            history_k: 8,
        }
    }
}

/// One observation `s = (G, R, O, H)`, everything in the robot frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyInput {
    pub plan: Vec<f64>,
    /// Ranges divided by the sensor's maximum range.
    pub lidar: Vec<f64>,
    pub odom: [f64; 2],
    pub humans: Vec<Vec<f64>>,
}

impl PolicyInput {
    pub fn validate(&self, arch: &PolicyArch) -> Result<(), NnError> {
        let bad = |op, got: usize, want: usize| NnError::Shape {
            op,
            lhs: vec![got],
            rhs: vec![want],
        };
        if self.plan.len() != PLAN_LEN {
            return Err(bad("plan input", self.plan.len(), PLAN_LEN));
        }
        if self.lidar.len() != arch.beams {
            return Err(bad("lidar input", self.lidar.len(), arch.beams));
        }
        for row in &self.humans {
            if row.len() != 2 * arch.history_k {
                return Err(bad("history row", row.len(), 2 * arch.history_k));
            }
        }
        Ok(())
    }
}

/// Builds the policy observation from simulator truth.
pub fn observe(world: &WorldState, full: &FullPlan, goal: Vec2) -> PolicyInput {
    observe_with_scan(world, full, goal, &raycast(world, &world.robot.pose))
}

/// [`observe`] reusing a scan already taken from the robot pose.
pub fn observe_with_scan(world: &WorldState, full: &FullPlan, goal: Vec2, scan: &LidarScan) -> PolicyInput {
    let pose = world.robot.pose;
    let r_max = world.config.lidar.r_max;
    PolicyInput {
        plan: downsample(full, &pose, goal).to_frame(&pose).to_vec(),
        lidar: scan.ranges.iter().map(|r| r / r_max).collect(),
        odom: [world.robot.twist.v, world.robot.twist.w],
        humans: world.history_rows(&pose, r_max),
    }
}

/// A stack of inputs in network layout.
#[derive(Clone, Debug)]
pub struct PolicyBatch {
    pub plan: Tensor,
    pub lidar: Tensor,
    pub odom: Tensor,
    pub humans: Tensor,
    pub offsets: Vec<usize>,
}

impl PolicyBatch {
    pub fn new(inputs: &[&PolicyInput], arch: &PolicyArch) -> Result<Self, NnError> {
        let b = inputs.len();
        let row_len = 2 * arch.history_k;
        let mut plan = Vec::with_capacity(b * PLAN_LEN);
        let mut lidar = Vec::with_capacity(b * arch.beams);
        let mut odom = Vec::with_capacity(b * 2);
        let mut humans = Vec::new();
        let mut offsets = vec![0];
        for inp in inputs {
            inp.validate(arch)?;
            plan.extend_from_slice(&inp.plan);
            lidar.extend_from_slice(&inp.lidar);
            odom.extend_from_slice(&inp.odom);
            for row in &inp.humans {
                humans.extend_from_slice(row);
            }
            offsets.push(offsets.last().unwrap() + inp.humans.len());
        }
        Ok(Self {
            plan: Tensor::new(&[b, PLAN_LEN], plan)?,
            lidar: Tensor::new(&[1, b, arch.beams], lidar)?,
            odom: Tensor::new(&[b, 2], odom)?,
            humans: Tensor::new(&[*offsets.last().unwrap(), row_len], humans)?,
            offsets,
        })
    }

    pub fn len(&self) -> usize {
        self.plan.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Five future poses `(x, y, cos θ, sin θ)` in the robot frame, at 1 s spacing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalPlan(pub [f64; LOCAL_PLAN_LEN]);

impl LocalPlan {
    pub fn from_slice(s: &[f64]) -> Self {
        let mut v = [0.0; LOCAL_PLAN_LEN];
        v.copy_from_slice(s);
        Self(v)
    }

    /// Heading comes from `atan2(sin, cos)` of the raw slots; an all-zero pair reads as 0.
    pub fn poses(&self) -> [Pose2D; LOCAL_POSES] {
        std::array::from_fn(|i| {
            let s = &self.0[4 * i..4 * i + 4];
            let theta = if s[2] == 0.0 && s[3] == 0.0 { 0.0 } else { s[3].atan2(s[2]) };
            Pose2D::new(s[0], s[1], theta)
        })
    }
}

/// Attention coefficients of one tick: `a = [g, r, h, o]`, `b = [l, r, g]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionReadout {
    pub a: [f64; 4],
    pub b: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyOutput {
    /// Clamped to the actuation limits.
    pub cmd: Twist,
    pub raw: Twist,
    pub plan: LocalPlan,
    pub readout: FusionReadout,
}

#[derive(Clone, Debug)]
pub struct PlannerCache {
    pub plan_enc: MlpCache,
    pub lidar: LidarCache,
    pub odom_enc: MlpCache,
    pub human: HumanCache,
    pub att: AttentionCache,
    pub head: MlpCache,
}

impl PlannerCache {
    pub fn f_g(&self) -> &Tensor {
        self.plan_enc.output()
    }

    pub fn f_r(&self) -> &Tensor {
        &self.lidar.out
    }

    pub fn plan(&self) -> &Tensor {
        self.head.output()
    }
}

#[derive(Clone, Debug)]
pub struct ControllerCache {
    pub local_enc: MlpCache,
    pub att: AttentionCache,
    pub head: MlpCache,
}

impl ControllerCache {
    pub fn velocity(&self) -> &Tensor {
        self.head.output()
    }
}

/// Gradients flowing out of the controller into its three inputs.
pub struct ControllerInputGrads {
    pub plan: Tensor,
    pub f_r: Tensor,
    pub f_g: Tensor,
}

/// All parameters of the proposed policy. Names starting with `ctrl.` belong
/// to the velocity controller; everything else is the local planner.
#[derive(Clone, Debug)]
pub struct PolicyNets {
    pub store: ParamStore,
    pub arch: PolicyArch,
    pub plan_enc: Mlp,
    pub lidar: LidarEncoder,
    pub odom_enc: Mlp,
    pub human: HumanEncoder,
    pub att4: Attention,
    pub plan_head: Mlp,
    pub local_enc: Mlp,
    pub att3: Attention,
    pub vel_head: Mlp,
}

pub const CONTROLLER_PREFIX: &str = "ctrl.";

impl PolicyNets {
    pub fn new(arch: PolicyArch, seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = FEATURE_DIM;
        let plan_enc = Mlp::new(&mut store, "plan_enc", &[PLAN_LEN, 32, d], true, &mut rng);
        let lidar = LidarEncoder::new(&mut store, arch.beams, &mut rng)?;
        let odom_enc = Mlp::new(&mut store, "odom_enc", &[2, 32, d], true, &mut rng);
        let human = HumanEncoder::new(&mut store, 2 * arch.history_k, &mut rng);
        let att4 = Attention::new(&mut store, "att4", 4, d, &mut rng);
        let plan_head = Mlp::new(&mut store, "plan_head", &[4 * d, 512, 256, 64, LOCAL_PLAN_LEN], false, &mut rng);
        let local_enc = Mlp::new(&mut store, "ctrl.local_enc", &[LOCAL_PLAN_LEN, 32, d], true, &mut rng);
        let att3 = Attention::new(&mut store, "ctrl.att3", 3, d, &mut rng);
        let vel_head = Mlp::new(&mut store, "ctrl.vel_head", &[3 * d, 512, 128, 32, 2], false, &mut rng);
        Ok(Self {
            store,
            arch,
            plan_enc,
            lidar,
            odom_enc,
            human,
            att4,
            plan_head,
            local_enc,
            att3,
            vel_head,
        })
    }

    pub fn planner_params(&self) -> Vec<ParamId> {
        self.store.ids().filter(|&id| !self.store.name(id).starts_with(CONTROLLER_PREFIX)).collect()
    }

    pub fn controller_params(&self) -> Vec<ParamId> {
        self.store.ids_with_prefix(CONTROLLER_PREFIX).collect()
    }

    pub fn planner_forward(&self, batch: &PolicyBatch) -> Result<PlannerCache, NnError> {
        let s = &self.store;
        let plan_enc = self.plan_enc.forward(s, batch.plan.clone())?;
        let lidar = self.lidar.forward(s, batch.lidar.clone())?;
        let odom_enc = self.odom_enc.forward(s, batch.odom.clone())?;
        let human = self.human.forward(s, batch.humans.clone(), &batch.offsets)?;
        let (fused, att) = self.att4.forward(s, &[plan_enc.output(), &lidar.out, &human.out, odom_enc.output()])?;
        let head = self.plan_head.forward(s, fused)?;
        Ok(PlannerCache {
            plan_enc,
            lidar,
            odom_enc,
            human,
            att,
            head,
        })
    }

    pub fn planner_backward(&self, c: &PlannerCache, d_plan: Tensor, grads: &mut Grads) -> Result<(), NnError> {
        self.planner_backward_with(c, d_plan, None, grads)
    }

    /// Backward through the planner, optionally adding extra upstream
    /// gradients on `f_r` and `f_g` (from the controller).
    pub fn planner_backward_with(
        &self,
        c: &PlannerCache,
        d_plan: Tensor,
        extra: Option<(Tensor, Tensor)>,
        grads: &mut Grads,
    ) -> Result<(), NnError> {
        let s = &self.store;
        let d_fused = self.plan_head.backward(s, &c.head, d_plan, grads, true).unwrap();
        let mut d = self.att4.backward(s, &c.att, &d_fused, grads).into_iter();
        let (mut dg, mut dr, dh, d_o) = (d.next().unwrap(), d.next().unwrap(), d.next().unwrap(), d.next().unwrap());
        if let Some((er, eg)) = extra {
            dr.add_assign(&er);
            dg.add_assign(&eg);
        }
        self.plan_enc.backward(s, &c.plan_enc, dg, grads, false);
        self.lidar.backward(s, &c.lidar, dr, grads)?;
        self.human.backward(s, &c.human, dh, grads);
        self.odom_enc.backward(s, &c.odom_enc, d_o, grads, false);
        Ok(())
    }

    /// `plan: [B, 20]`, `f_r`, `f_g: [B, 512]`.
    pub fn controller_forward(&self, plan: &Tensor, f_r: &Tensor, f_g: &Tensor) -> Result<ControllerCache, NnError> {
        let s = &self.store;
        let local_enc = self.local_enc.forward(s, plan.clone())?;
        let (fused, att) = self.att3.forward(s, &[local_enc.output(), f_r, f_g])?;
        let head = self.vel_head.forward(s, fused)?;
        Ok(ControllerCache { local_enc, att, head })
    }

    pub fn controller_backward(
        &self,
        c: &ControllerCache,
        d_vel: Tensor,
        grads: &mut Grads,
        need_inputs: bool,
    ) -> Option<ControllerInputGrads> {
        let s = &self.store;
        let d_fused = self.vel_head.backward(s, &c.head, d_vel, grads, true).unwrap();
        let mut d = self.att3.backward(s, &c.att, &d_fused, grads).into_iter();
        let (dl, dr, dg) = (d.next().unwrap(), d.next().unwrap(), d.next().unwrap());
        let d_plan = self.local_enc.backward(s, &c.local_enc, dl, grads, need_inputs)?;
        Some(ControllerInputGrads {
            plan: d_plan,
            f_r: dr,
            f_g: dg,
        })
    }

    /// Full forward over a batch. `f_r` and `f_g` are computed once and
    /// shared by both stages.
    pub fn forward_batch(&self, batch: &PolicyBatch) -> Result<(PlannerCache, ControllerCache), NnError> {
        let p = self.planner_forward(batch)?;
        let c = self.controller_forward(p.plan(), p.f_r(), p.f_g())?;
        Ok((p, c))
    }

    /// Gradients of the composed network given upstream gradients on the
    /// predicted plan and on the raw velocity.
    pub fn backward_full(
        &self,
        p: &PlannerCache,
        c: &ControllerCache,
        mut d_plan: Tensor,
        d_vel: Tensor,
        grads: &mut Grads,
    ) -> Result<(), NnError> {
        let g = self.controller_backward(c, d_vel, grads, true).unwrap();
        d_plan.add_assign(&g.plan);
        self.planner_backward_with(p, d_plan, Some((g.f_r, g.f_g)), grads)
    }

    pub fn act_batch(&self, inputs: &[&PolicyInput]) -> Result<Vec<PolicyOutput>, NnError> {
        let batch = PolicyBatch::new(inputs, &self.arch)?;
        let (p, c) = self.forward_batch(&batch)?;
        let vel = c.velocity();
        vel.check_finite("policy output")?;
        Ok((0..batch.len())
            .map(|i| {
                let raw = Twist::new(vel.row(i)[0], vel.row(i)[1]);
                let (a, b) = (p.att.a.row(i), c.att.a.row(i));
                PolicyOutput {
                    cmd: raw.clamped(),
                    raw,
                    plan: LocalPlan::from_slice(p.plan().row(i)),
                    readout: FusionReadout {
                        a: [a[0], a[1], a[2], a[3]],
                        b: [b[0], b[1], b[2]],
                    },
                }
            })
            .collect())
    }

    pub fn act(&self, input: &PolicyInput) -> Result<PolicyOutput, NnError> {
        Ok(self.act_batch(&[input])?.remove(0))
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        nn::save_checkpoint(&self.store, path)
    }

    /// Loads a checkpoint that must cover every parameter of `arch`.
    pub fn load(arch: PolicyArch, path: &Path) -> Result<Self, NnError> {
        let mut nets = Self::new(arch, 0)?;
        let entries = nn::load_checkpoint(path)?;
        if entries.len() != nets.store.len() {
            return Err(NnError::Checkpoint(format!(
                "{} holds {} tensors, policy expects {}",
                path.display(),
                entries.len(),
                nets.store.len()
            )));
        }
        nets.store.assign(&entries)?;
        Ok(nets)
    }
}
