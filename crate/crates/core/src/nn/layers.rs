use rand::Rng;

use super::ops::{conv1d_backward, conv1d_forward, dense_backward, dense_forward, relu_backward_inplace, relu_inplace};
use super::{glorot_uniform, Grads, NnError, ParamId, ParamStore, Tensor};

/// Fully connected layer over `[B, in]` batches, optionally followed by ReLU.
#[derive(Clone, Copy, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub relu: bool,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, relu: bool, rng: &mut impl Rng) -> Self {
        let w = store.add(format!("{name}.w"), glorot_uniform(&[outputs, inputs], inputs, outputs, rng));
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[outputs]));
        Self {
            w,
            b,
            relu,
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor, NnError> {
        let mut y = dense_forward(x, store.get(self.w), store.get(self.b))?;
        if self.relu {
            relu_inplace(&mut y);
        }
        Ok(y)
    }

    /// `x` and `y` are the input and output of the matching forward call.
    pub fn backward(
        &self,
        store: &ParamStore,
        x: &Tensor,
        y: &Tensor,
        mut dy: Tensor,
        grads: &mut Grads,
        need_dx: bool,
    ) -> Option<Tensor> {
        if self.relu {
            relu_backward_inplace(y, &mut dy);
        }
        let (dx, dw, db) = dense_backward(x, store.get(self.w), &dy, need_dx);
        grads.accumulate(self.w, &dw);
        grads.accumulate(self.b, &db);
        dx
    }
}

/// Stack of dense layers; every layer but possibly the last uses ReLU.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations of one [`Mlp::forward`]: input first, output last.
#[derive(Clone, Debug)]
pub struct MlpCache {
    pub acts: Vec<Tensor>,
}

impl MlpCache {
    pub fn output(&self) -> &Tensor {
        self.acts.last().expect("cache holds at least the input")
    }
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]`.
    pub fn new(store: &mut ParamStore, name: &str, sizes: &[usize], relu_last: bool, rng: &mut impl Rng) -> Self {
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let relu = i + 1 < n || relu_last;
                Dense::new(store, &format!("{name}.{i}"), sizes[i], sizes[i + 1], relu, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().unwrap().outputs
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|l| [l.w, l.b]).collect()
    }

    pub fn forward(&self, store: &ParamStore, x: Tensor) -> Result<MlpCache, NnError> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        for l in &self.layers {
            let y = l.forward(store, acts.last().unwrap())?;
            acts.push(y);
        }
        Ok(MlpCache { acts })
    }

    /// Inference-only forward that keeps no intermediates.
    pub fn apply(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor, NnError> {
        let mut h = self.layers[0].forward(store, x)?;
        for l in &self.layers[1..] {
            h = l.forward(store, &h)?;
        }
        Ok(h)
    }

    pub fn backward(&self, store: &ParamStore, cache: &MlpCache, dy: Tensor, grads: &mut Grads, need_dx: bool) -> Option<Tensor> {
        let mut g = dy;
        for (i, l) in self.layers.iter().enumerate().rev() {
            let want = i > 0 || need_dx;
            g = l.backward(store, &cache.acts[i], &cache.acts[i + 1], g, grads, want)?;
        }
        Some(g)
    }
}

/// 1D convolution over `[C, B, L]` signals. Activation is left to the caller.
#[derive(Clone, Copy, Debug)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.add(
            format!("{name}.w"),
            glorot_uniform(&[c_out, c_in, kernel], c_in * kernel, c_out * kernel, rng),
        );
        let b = store.add(format!("{name}.b"), Tensor::zeros(&[c_out]));
        Self { w, b, stride, pad }
    }

    pub fn forward(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor, NnError> {
        conv1d_forward(x, store.get(self.w), store.get(self.b), self.stride, self.pad)
    }

    pub fn backward(&self, store: &ParamStore, x: &Tensor, dy: &Tensor, grads: &mut Grads, need_dx: bool) -> Result<Option<Tensor>, NnError> {
        let (dx, dw, db) = conv1d_backward(x, store.get(self.w), dy, self.stride, self.pad, need_dx)?;
        grads.accumulate(self.w, &dw);
        grads.accumulate(self.b, &db);
        Ok(dx)
    }
}
