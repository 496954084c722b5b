use rand::Rng;

use crate::nn::ops::{linear_backward, linear_forward, relu_backward_inplace, relu_inplace, softmax, softmax_backward};
use crate::nn::{glorot_uniform, Grads, NnError, ParamId, ParamStore, Tensor};

const HIDDEN: usize = 128;

/// Soft attention over `n` equal-width feature blocks:
/// `u = relu(W1·[f_1 … f_n])`, `a = softmax(W2·u)`, output `[a_1 f_1 … a_n f_n]`.
#[derive(Clone, Debug)]
pub struct Attention {
    pub w1: ParamId,
    pub w2: ParamId,
    n: usize,
    dim: usize,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    concat: Tensor,
    u: Tensor,
    /// `[B, n]` coefficients.
    pub a: Tensor,
}

/// Column-wise concatenation of `[B, d_i]` matrices.
pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor, NnError> {
    let b = parts[0].rows();
    let width: usize = parts.iter().map(|p| p.cols()).sum();
    let mut out = Vec::with_capacity(b * width);
    for r in 0..b {
        for p in parts {
            if p.rows() != b {
                return Err(NnError::Shape {
                    op: "concat",
                    lhs: parts[0].shape().to_vec(),
                    rhs: p.shape().to_vec(),
                });
            }
            out.extend_from_slice(p.row(r));
        }
    }
    Tensor::new(&[b, width], out)
}

/// Splits `[B, n·d]` into `n` blocks of `[B, d]`.
pub fn split_cols(x: &Tensor, n: usize) -> Vec<Tensor> {
    let (b, d) = (x.rows(), x.cols() / n);
    (0..n)
        .map(|i| {
            let mut data = Vec::with_capacity(b * d);
            for r in 0..b {
                data.extend_from_slice(&x.row(r)[i * d..(i + 1) * d]);
            }
            Tensor::new(&[b, d], data).unwrap()
        })
        .collect()
}

impl Attention {
    pub fn new(store: &mut ParamStore, name: &str, n: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let w1 = store.add(format!("{name}.w1"), glorot_uniform(&[HIDDEN, n * dim], n * dim, HIDDEN, rng));
        let w2 = store.add(format!("{name}.w2"), glorot_uniform(&[n, HIDDEN], HIDDEN, n, rng));
        Self { w1, w2, n, dim }
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.w1, self.w2]
    }

    pub fn forward(&self, store: &ParamStore, feats: &[&Tensor]) -> Result<(Tensor, AttentionCache), NnError> {
        if feats.len() != self.n || feats.iter().any(|f| f.cols() != self.dim) {
            return Err(NnError::Shape {
                op: "attention",
                lhs: feats.iter().map(|f| f.cols()).collect(),
                rhs: vec![self.dim; self.n],
            });
        }
        let concat = concat_cols(feats)?;
        let mut u = linear_forward(&concat, store.get(self.w1))?;
        relu_inplace(&mut u);
        let logits = linear_forward(&u, store.get(self.w2))?;
        let b = concat.rows();
        let mut a = Tensor::zeros(&[b, self.n]);
        for r in 0..b {
            let s = softmax(logits.row(r));
            a.data_mut()[r * self.n..(r + 1) * self.n].copy_from_slice(&s);
        }
        let mut fused = concat.clone();
        let width = self.n * self.dim;
        for r in 0..b {
            let row = &mut fused.data_mut()[r * width..(r + 1) * width];
            for (i, block) in row.chunks_mut(self.dim).enumerate() {
                let ai = a.data()[r * self.n + i];
                block.iter_mut().for_each(|v| *v *= ai);
            }
        }
        Ok((fused, AttentionCache { concat, u, a }))
    }

    /// Returns the gradient with respect to each input block.
    pub fn backward(&self, store: &ParamStore, c: &AttentionCache, d_fused: &Tensor, grads: &mut Grads) -> Vec<Tensor> {
        let (b, n, d) = (c.concat.rows(), self.n, self.dim);
        let width = n * d;
        let mut d_concat = Tensor::zeros(&[b, width]);
        let mut d_logits = Tensor::zeros(&[b, n]);
        for r in 0..b {
            let a = &c.a.data()[r * n..(r + 1) * n];
            let g = &d_fused.data()[r * width..(r + 1) * width];
            let f = &c.concat.data()[r * width..(r + 1) * width];
            let mut da = vec![0.0; n];
            let dst = &mut d_concat.data_mut()[r * width..(r + 1) * width];
            for i in 0..n {
                let (gi, fi) = (&g[i * d..(i + 1) * d], &f[i * d..(i + 1) * d]);
                da[i] = gi.iter().zip(fi).map(|(x, y)| x * y).sum();
                for (o, x) in dst[i * d..(i + 1) * d].iter_mut().zip(gi) {
                    *o = a[i] * x;
                }
            }
            d_logits.data_mut()[r * n..(r + 1) * n].copy_from_slice(&softmax_backward(a, &da));
        }
        let (du, dw2) = linear_backward(&c.u, store.get(self.w2), &d_logits, true);
        grads.accumulate(self.w2, &dw2);
        let mut du = du.unwrap();
        relu_backward_inplace(&c.u, &mut du);
        let (dc, dw1) = linear_backward(&c.concat, store.get(self.w1), &du, true);
        grads.accumulate(self.w1, &dw1);
        d_concat.add_assign(&dc.unwrap());
        split_cols(&d_concat, n)
    }
}
