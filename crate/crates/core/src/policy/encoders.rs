use rand::Rng;

use crate::nn::ops::{channels_to_rows, maxpool_segments, maxpool_segments_backward, relu_backward_inplace, relu_inplace, rows_to_channels};
use crate::nn::ops::conv_out_len_checked;
use crate::nn::{Conv1d, Dense, Grads, Mlp, MlpCache, NnError, ParamId, ParamStore, Tensor};

pub const FEATURE_DIM: usize = 512;
const CHANNELS: usize = 64;

/// Residual 1D-conv encoder for a lidar scan.
///
/// ```text
/// x ─ conv7/3 ─ relu ─┬─ conv3 ─ relu ─ conv3 ─(+)─ relu ─ conv3/2 ─ relu ─┬─ conv3 ─(+)─ relu ─ dense512 ─ relu
///                     └──────────────────────────┘                           └──────────┘
/// ```
#[derive(Clone, Debug)]
pub struct LidarEncoder {
    convs: [Conv1d; 5],
    fc: Dense,
    beams: usize,
    len2: usize,
}

/// Post-activation tensors of one lidar forward pass, `[C, B, L]` layout.
#[derive(Clone, Debug)]
pub struct LidarCache {
    x: Tensor,
    h1: Tensor,
    a2: Tensor,
    h2: Tensor,
    h3: Tensor,
    h4: Tensor,
    flat: Tensor,
    pub out: Tensor,
}

fn add_relu(mut z: Tensor, skip: &Tensor) -> Tensor {
    z.add_assign(skip);
    relu_inplace(&mut z);
    z
}

fn masked(mut d: Tensor, y: &Tensor) -> Tensor {
    relu_backward_inplace(y, &mut d);
    d
}

impl LidarEncoder {
    pub fn new(store: &mut ParamStore, beams: usize, rng: &mut impl Rng) -> Result<Self, NnError> {
        let len1 = conv_out_len_checked(beams, 7, 3, 0)?;
        let len2 = conv_out_len_checked(len1, 3, 2, 0)?;
        let convs = [
            Conv1d::new(store, "lidar.conv1", 1, CHANNELS, 7, 3, 0, rng),
            Conv1d::new(store, "lidar.conv2", CHANNELS, CHANNELS, 3, 1, 1, rng),
            Conv1d::new(store, "lidar.conv3", CHANNELS, CHANNELS, 3, 1, 1, rng),
            Conv1d::new(store, "lidar.conv4", CHANNELS, CHANNELS, 3, 2, 0, rng),
            Conv1d::new(store, "lidar.conv5", CHANNELS, CHANNELS, 3, 1, 1, rng),
        ];
        let fc = Dense::new(store, "lidar.fc", CHANNELS * len2, FEATURE_DIM, true, rng);
        Ok(Self { convs, fc, beams, len2 })
    }

    pub fn beams(&self) -> usize {
        self.beams
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p: Vec<ParamId> = self.convs.iter().flat_map(|c| [c.w, c.b]).collect();
        p.extend([self.fc.w, self.fc.b]);
        p
    }

    /// `x: [1, B, M]` normalized ranges.
    pub fn forward(&self, store: &ParamStore, x: Tensor) -> Result<LidarCache, NnError> {
        if x.shape().len() != 3 || x.shape()[0] != 1 || x.shape()[2] != self.beams {
            return Err(NnError::Shape {
                op: "lidar encoder",
                lhs: x.shape().to_vec(),
                rhs: vec![1, x.shape().get(1).copied().unwrap_or(0), self.beams],
            });
        }
        let [c1, c2, c3, c4, c5] = &self.convs;
        let mut h1 = c1.forward(store, &x)?;
        relu_inplace(&mut h1);
        let mut a2 = c2.forward(store, &h1)?;
        relu_inplace(&mut a2);
        let h2 = add_relu(c3.forward(store, &a2)?, &h1);
        let mut h3 = c4.forward(store, &h2)?;
        relu_inplace(&mut h3);
        let h4 = add_relu(c5.forward(store, &h3)?, &h3);
        let flat = channels_to_rows(&h4);
        let out = self.fc.forward(store, &flat)?;
        Ok(LidarCache {
            x,
            h1,
            a2,
            h2,
            h3,
            h4,
            flat,
            out,
        })
    }

    pub fn backward(&self, store: &ParamStore, c: &LidarCache, d_out: Tensor, grads: &mut Grads) -> Result<(), NnError> {
        let [c1, c2, c3, c4, c5] = &self.convs;
        let d_flat = self.fc.backward(store, &c.flat, &c.out, d_out, grads, true).unwrap();
        let dz5 = masked(rows_to_channels(&d_flat, CHANNELS, self.len2), &c.h4);
        let mut dh3 = c5.backward(store, &c.h3, &dz5, grads, true)?.unwrap();
        dh3.add_assign(&dz5);
        let dz4 = masked(dh3, &c.h3);
        let dh2 = c4.backward(store, &c.h2, &dz4, grads, true)?.unwrap();
        let dz3 = masked(dh2, &c.h2);
        let da2 = c3.backward(store, &c.a2, &dz3, grads, true)?.unwrap();
        let dz2 = masked(da2, &c.a2);
        let mut dh1 = c2.backward(store, &c.h1, &dz2, grads, true)?.unwrap();
        dh1.add_assign(&dz3);
        let dz1 = masked(dh1, &c.h1);
        c1.backward(store, &c.x, &dz1, grads, false)?;
        Ok(())
    }
}

/// Set encoder: shared per-row perceptron, column max-pool per sample, dense.
#[derive(Clone, Debug)]
pub struct HumanEncoder {
    point: Mlp,
    post: Dense,
}

#[derive(Clone, Debug)]
pub struct HumanCache {
    point: MlpCache,
    arg: Vec<Option<usize>>,
    pooled: Tensor,
    pub out: Tensor,
}

impl HumanEncoder {
    pub fn new(store: &mut ParamStore, row_len: usize, rng: &mut impl Rng) -> Self {
        let point = Mlp::new(store, "human.point", &[row_len, 64, 256, 1024], true, rng);
        let post = Dense::new(store, "human.post", 1024, FEATURE_DIM, true, rng);
        Self { point, post }
    }

    pub fn row_len(&self) -> usize {
        self.point.inputs()
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.point.params();
        p.extend([self.post.w, self.post.b]);
        p
    }

    /// `rows: [R, 2k]`; rows `offsets[i]..offsets[i+1]` belong to sample `i`.
    pub fn forward(&self, store: &ParamStore, rows: Tensor, offsets: &[usize]) -> Result<HumanCache, NnError> {
        rows.require_shape("human rows", &[rows.rows(), self.row_len()])?;
        let point = self.point.forward(store, rows)?;
        let (pooled, arg) = maxpool_segments(point.output(), offsets);
        let out = self.post.forward(store, &pooled)?;
        Ok(HumanCache {
            point,
            arg,
            pooled,
            out,
        })
    }

    pub fn backward(&self, store: &ParamStore, c: &HumanCache, d_out: Tensor, grads: &mut Grads) {
        let d_pooled = self.post.backward(store, &c.pooled, &c.out, d_out, grads, true).unwrap();
        let d_rows = maxpool_segments_backward(&d_pooled, &c.arg, c.point.output().rows());
        self.point.backward(store, &c.point, d_rows, grads, false);
    }
}
