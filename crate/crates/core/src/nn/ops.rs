//! Differentiable kernels. Each forward has a matching backward that returns
//! exact gradients given the upstream gradient.

use super::gemm::gemm;
use super::{NnError, Tensor};

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NnError {
    NnError::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

/// `y = x · wᵀ + b` for a batch `x: [B, in]`, `w: [out, in]`, `b: [out]`.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor, NnError> {
    if w.shape().len() != 2 || x.shape().len() != 2 || x.shape()[1] != w.shape()[1] {
        return Err(shape_err("dense", x, w));
    }
    let (bn, inp, out) = (x.rows(), w.shape()[1], w.shape()[0]);
    if b.shape() != [out] {
        return Err(shape_err("dense bias", w, b));
    }
    let mut y = Vec::with_capacity(bn * out);
    for _ in 0..bn {
        y.extend_from_slice(b.data());
    }
    gemm(false, true, bn, out, inp, 1.0, x.data(), w.data(), 1.0, &mut y);
    Tensor::new(&[bn, out], y)
}

/// Gradients of [`dense_forward`]: returns `(dx, dw, db)`; `dx` only when asked.
pub fn dense_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    need_dx: bool,
) -> (Option<Tensor>, Tensor, Tensor) {
    let (bn, inp, out) = (x.rows(), w.shape()[1], w.shape()[0]);
    debug_assert_eq!(dy.shape(), [bn, out]);
    let mut dw = Tensor::zeros(&[out, inp]);
    gemm(true, false, out, inp, bn, 1.0, dy.data(), x.data(), 0.0, dw.data_mut());
    let mut db = Tensor::zeros(&[out]);
    for r in 0..bn {
        for (acc, g) in db.data_mut().iter_mut().zip(dy.row(r)) {
            *acc += g;
        }
    }
    let dx = need_dx.then(|| {
        let mut dx = Tensor::zeros(&[bn, inp]);
        gemm(false, false, bn, inp, out, 1.0, dy.data(), w.data(), 0.0, dx.data_mut());
        dx
    });
    (dx, dw, db)
}

/// Bias-free `y = x · wᵀ`.
pub fn linear_forward(x: &Tensor, w: &Tensor) -> Result<Tensor, NnError> {
    if w.shape().len() != 2 || x.shape().len() != 2 || x.shape()[1] != w.shape()[1] {
        return Err(shape_err("linear", x, w));
    }
    let (bn, inp, out) = (x.rows(), w.shape()[1], w.shape()[0]);
    let mut y = Tensor::zeros(&[bn, out]);
    gemm(false, true, bn, out, inp, 1.0, x.data(), w.data(), 0.0, y.data_mut());
    Ok(y)
}

/// Gradients of [`linear_forward`]: `(dx, dw)`.
pub fn linear_backward(x: &Tensor, w: &Tensor, dy: &Tensor, need_dx: bool) -> (Option<Tensor>, Tensor) {
    let (bn, inp, out) = (x.rows(), w.shape()[1], w.shape()[0]);
    let mut dw = Tensor::zeros(&[out, inp]);
    gemm(true, false, out, inp, bn, 1.0, dy.data(), x.data(), 0.0, dw.data_mut());
    let dx = need_dx.then(|| {
        let mut dx = Tensor::zeros(&[bn, inp]);
        gemm(false, false, bn, inp, out, 1.0, dy.data(), w.data(), 0.0, dx.data_mut());
        dx
    });
    (dx, dw)
}

/// `[C, B, L]` channel-major activations to `[B, C·L]` rows.
pub fn channels_to_rows(x: &Tensor) -> Tensor {
    let (c, b, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = vec![0.0; c * b * l];
    for ci in 0..c {
        for bi in 0..b {
            let src = &x.data()[(ci * b + bi) * l..][..l];
            out[bi * c * l + ci * l..][..l].copy_from_slice(src);
        }
    }
    Tensor::new(&[b, c * l], out).unwrap()
}

/// Inverse of [`channels_to_rows`].
pub fn rows_to_channels(x: &Tensor, c: usize, l: usize) -> Tensor {
    let b = x.rows();
    let mut out = vec![0.0; c * b * l];
    for ci in 0..c {
        for bi in 0..b {
            out[(ci * b + bi) * l..][..l].copy_from_slice(&x.data()[bi * c * l + ci * l..][..l]);
        }
    }
    Tensor::new(&[c, b, l], out).unwrap()
}

/// Output length of a strided, zero-padded valid cross-correlation.
pub fn conv_out_len(len: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = len + 2 * pad;
    (stride > 0 && padded >= kernel).then(|| (padded - kernel) / stride + 1)
}

/// [`conv_out_len`] with a shape error when the kernel does not fit.
pub fn conv_out_len_checked(len: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize, NnError> {
    conv_out_len(len, kernel, stride, pad).ok_or(NnError::Shape {
        op: "conv1d kernel",
        lhs: vec![len],
        rhs: vec![kernel],
    })
}

/// Layout of a batched 1D signal: `[channels, batch, length]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub batch: usize,
    pub len_in: usize,
    pub len_out: usize,
}

impl ConvGeom {
    fn new(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Result<Self, NnError> {
        let (xs, ws) = (x.shape(), w.shape());
        if xs.len() != 3 || ws.len() != 3 || xs[0] != ws[1] {
            return Err(shape_err("conv1d", x, w));
        }
        let len_out = conv_out_len(xs[2], ws[2], stride, pad).ok_or_else(|| shape_err("conv1d kernel", x, w))?;
        Ok(Self {
            c_in: xs[0],
            c_out: ws[0],
            kernel: ws[2],
            stride,
            pad,
            batch: xs[1],
            len_in: xs[2],
            len_out,
        })
    }

    fn im2col(&self, x: &[f64]) -> Vec<f64> {
        let (bl, lo) = (self.batch * self.len_out, self.len_out);
        let mut cols = vec![0.0; self.c_in * self.kernel * bl];
        for ci in 0..self.c_in {
            for kk in 0..self.kernel {
                let row = &mut cols[(ci * self.kernel + kk) * bl..][..bl];
                for b in 0..self.batch {
                    let src = &x[(ci * self.batch + b) * self.len_in..][..self.len_in];
                    let dst = &mut row[b * lo..][..lo];
                    for (l, d) in dst.iter_mut().enumerate() {
                        let pos = (l * self.stride + kk) as isize - self.pad as isize;
                        if pos >= 0 && (pos as usize) < self.len_in {
                            *d = src[pos as usize];
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let (bl, lo) = (self.batch * self.len_out, self.len_out);
        for ci in 0..self.c_in {
            for kk in 0..self.kernel {
                let row = &cols[(ci * self.kernel + kk) * bl..][..bl];
                for b in 0..self.batch {
                    let dst = &mut dx[(ci * self.batch + b) * self.len_in..][..self.len_in];
                    for (l, g) in row[b * lo..][..lo].iter().enumerate() {
                        let pos = (l * self.stride + kk) as isize - self.pad as isize;
                        if pos >= 0 && (pos as usize) < self.len_in {
                            dst[pos as usize] += g;
                        }
                    }
                }
            }
        }
    }
}

/// Batched 1D cross-correlation. `x: [C_in, B, L]`, `w: [C_out, C_in, K]`,
/// `b: [C_out]`; returns `[C_out, B, L']` with `L' = (L + 2·pad − K)/stride + 1`.
pub fn conv1d_forward(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Result<Tensor, NnError> {
    let g = ConvGeom::new(x, w, stride, pad)?;
    if b.shape() != [g.c_out] {
        return Err(shape_err("conv1d bias", w, b));
    }
    let cols = g.im2col(x.data());
    let bl = g.batch * g.len_out;
    let mut y = Vec::with_capacity(g.c_out * bl);
    for &bias in b.data() {
        y.extend(std::iter::repeat_n(bias, bl));
    }
    gemm(false, false, g.c_out, bl, g.c_in * g.kernel, 1.0, w.data(), &cols, 1.0, &mut y);
    Tensor::new(&[g.c_out, g.batch, g.len_out], y)
}

/// Gradients of [`conv1d_forward`]: `(dx, dw, db)`.
pub fn conv1d_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    stride: usize,
    pad: usize,
    need_dx: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor), NnError> {
    let g = ConvGeom::new(x, w, stride, pad)?;
    dy.require_shape("conv1d grad", &[g.c_out, g.batch, g.len_out])?;
    let bl = g.batch * g.len_out;
    let ck = g.c_in * g.kernel;
    let cols = g.im2col(x.data());
    let mut dw = Tensor::zeros(w.shape());
    gemm(false, true, g.c_out, ck, bl, 1.0, dy.data(), &cols, 0.0, dw.data_mut());
    drop(cols);
    let db = Tensor::vector(
        dy.data()
            .chunks(bl)
            .map(|c| c.iter().sum())
            .collect(),
    );
    let dx = if need_dx {
        let mut dcols = vec![0.0; ck * bl];
        gemm(true, false, ck, bl, g.c_out, 1.0, w.data(), dy.data(), 0.0, &mut dcols);
        let mut dx = Tensor::zeros(x.shape());
        g.col2im(&dcols, dx.data_mut());
        Some(dx)
    } else {
        None
    };
    Ok((dx, dw, db))
}

/// Single-signal convenience form: `input: [C_in, L]` → `[C_out, L']`, no padding.
pub fn conv1d(input: &Tensor, kernels: &Tensor, bias: &Tensor, stride: usize) -> Result<Tensor, NnError> {
    if input.shape().len() != 2 {
        return Err(shape_err("conv1d", input, kernels));
    }
    let (c, l) = (input.shape()[0], input.shape()[1]);
    let x = input.clone().reshape(&[c, 1, l])?;
    let y = conv1d_forward(&x, kernels, bias, stride, 0)?;
    let (co, lo) = (y.shape()[0], y.shape()[2]);
    y.reshape(&[co, lo])
}

pub fn relu_inplace(x: &mut Tensor) {
    x.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Masks `dy` where the ReLU output `y` was not positive.
pub fn relu_backward_inplace(y: &Tensor, dy: &mut Tensor) {
    for (g, &o) in dy.data_mut().iter_mut().zip(y.data()) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Max-subtracted softmax of one vector.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Vector-Jacobian product of softmax given its output `y`.
pub fn softmax_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    y.iter().zip(dy).map(|(yi, gi)| yi * (gi - dot)).collect()
}

/// Column-wise max over a set of rows, with the winning row per column.
/// An empty set yields zeros. Ties go to the first row.
pub fn maxpool_set(rows: &Tensor) -> (Vec<f64>, Vec<Option<usize>>) {
    let d = rows.cols();
    let mut out = vec![0.0; d];
    let mut arg = vec![None; d];
    for r in 0..rows.rows() {
        for (j, &v) in rows.row(r).iter().enumerate() {
            if arg[j].is_none() || v > out[j] {
                out[j] = v;
                arg[j] = Some(r);
            }
        }
    }
    (out, arg)
}

/// Segmented max-pool: rows `offsets[i]..offsets[i+1]` of `x` form set `i`.
/// Returns `[sets, D]` and the argmax row per output entry.
pub fn maxpool_segments(x: &Tensor, offsets: &[usize]) -> (Tensor, Vec<Option<usize>>) {
    let d = x.cols();
    let sets = offsets.len() - 1;
    let mut out = Tensor::zeros(&[sets, d]);
    let mut arg = vec![None; sets * d];
    for s in 0..sets {
        let dst = &mut out.data_mut()[s * d..(s + 1) * d];
        let a = &mut arg[s * d..(s + 1) * d];
        for r in offsets[s]..offsets[s + 1] {
            for (j, &v) in x.row(r).iter().enumerate() {
                if a[j].is_none() || v > dst[j] {
                    dst[j] = v;
                    a[j] = Some(r);
                }
            }
        }
    }
    (out, arg)
}

/// Routes pooled gradients back to the winning rows.
pub fn maxpool_segments_backward(dy: &Tensor, arg: &[Option<usize>], rows: usize) -> Tensor {
    let d = dy.cols();
    let mut dx = Tensor::zeros(&[rows, d]);
    for (i, (&g, a)) in dy.data().iter().zip(arg).enumerate() {
        if let Some(r) = a {
            dx.data_mut()[r * d + i % d] += g;
        }
    }
    dx
}

/// Mean squared error over all elements and its gradient `2(pred − target)/N`.
pub fn l2_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor), NnError> {
    if pred.shape() != target.shape() {
        return Err(shape_err("l2_loss", pred, target));
    }
    let n = pred.len().max(1) as f64;
    let mut grad = Tensor::zeros(pred.shape());
    let mut loss = 0.0;
    for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_identity_and_scalar() {
        let x = Tensor::new(&[1, 3], vec![1.0, -2.0, 3.0]).unwrap();
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 4] = 1.0;
        }
        let y = dense_forward(&x, &eye, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y.data(), x.data());

        let x = Tensor::new(&[1, 1], vec![4.0]).unwrap();
        let w = Tensor::new(&[1, 1], vec![2.0]).unwrap();
        let b = Tensor::vector(vec![3.0]);
        assert_eq!(dense_forward(&x, &w, &b).unwrap().data(), [11.0]);
        let (dx, dw, db) = dense_backward(&x, &w, &Tensor::new(&[1, 1], vec![1.0]).unwrap(), true);
        assert_eq!(dw.data(), [4.0]);
        assert_eq!(db.data(), [1.0]);
        assert_eq!(dx.unwrap().data(), [2.0]);
    }

    #[test]
    fn dense_shape_error_names_shapes() {
        let x = Tensor::zeros(&[2, 3]);
        let w = Tensor::zeros(&[4, 5]);
        let e = dense_forward(&x, &w, &Tensor::zeros(&[4])).unwrap_err();
        assert_eq!(
            e,
            NnError::Shape {
                op: "dense",
                lhs: vec![2, 3],
                rhs: vec![4, 5]
            }
        );
        assert!(e.to_string().contains("[2, 3]") && e.to_string().contains("[4, 5]"));
    }

    #[test]
    fn conv_examples() {
        let x = Tensor::new(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let k1 = Tensor::new(&[1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::zeros(&[1]);
        assert_eq!(conv1d(&x, &k1, &b, 1).unwrap().data(), x.data());
        let k2 = Tensor::new(&[1, 1, 2], vec![1.0, 1.0]).unwrap();
        let y = conv1d(&x, &k2, &b, 2).unwrap();
        assert_eq!(y.shape(), [1, 2]);
        assert_eq!(y.data(), [3.0, 7.0]);
        let k5 = Tensor::zeros(&[1, 1, 5]);
        assert!(conv1d(&x, &k5, &b, 1).is_err());
    }

    #[test]
    fn padded_conv_keeps_length() {
        let x = Tensor::new(&[1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let k = Tensor::new(&[1, 1, 3], vec![1.0, 1.0, 1.0]).unwrap();
        let y = conv1d_forward(&x, &k, &Tensor::zeros(&[1]), 1, 1).unwrap();
        assert_eq!(y.data(), [3.0, 6.0, 9.0, 7.0]);
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0; 4]), vec![0.25; 4]);
        let s = softmax(&[1000.0, 0.0]);
        assert!((s[0] - 1.0).abs() < 1e-12 && s[1] >= 0.0 && s[1] < 1e-12);
        assert!(s.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn maxpool_cases() {
        let one = Tensor::new(&[1, 3], vec![1.0, -2.0, 0.5]).unwrap();
        assert_eq!(maxpool_set(&one).0, vec![1.0, -2.0, 0.5]);
        let empty = Tensor::zeros(&[0, 3]);
        assert_eq!(maxpool_set(&empty).0, vec![0.0; 3]);
        let tie = Tensor::new(&[2, 1], vec![1.0, 1.0]).unwrap();
        assert_eq!(maxpool_set(&tie).1, vec![Some(0)]);
    }

    #[test]
    fn l2_cases() {
        let a = Tensor::vector(vec![1.0, 1.0]);
        let z = Tensor::zeros(&[2]);
        assert_eq!(l2_loss(&a, &a).unwrap().0, 0.0);
        let (l, g) = l2_loss(&a, &z).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g.data(), [1.0, 1.0]);
        assert!(l2_loss(&a, &Tensor::zeros(&[3])).is_err());
    }
}
