//! Layers over `[batch, channels, length]` (convolutional) and
//! `[batch, features]` (dense) tensors.
//!
//! Each layer owns its parameters and matching gradient buffers; `backward`
//! accumulates into the buffers and returns the gradient with respect to the
//! layer input. Callers keep the forward inputs they need for backward.

use ndarray::{Array, Array1, Array2, Array3, Axis, Dimension};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng::standard_normal;

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// N(0, std^2), the DCGAN-style initialization.
    Normal(f64),
    /// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
    GlorotUniform,
}

impl Init {
    fn draw(&self, rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> f64 {
        match *self {
            Init::Normal(std) => standard_normal(rng) * std,
            Init::GlorotUniform => {
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                use rand::Rng;
                rng.gen_range(-a..a)
            }
        }
    }
}

/// Mutable view of one parameter tensor and its gradient, consumed by the
/// optimizer.
pub struct ParamView<'a> {
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
}

/// Fully connected layer: y = x W^T + b.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    gw: Array2<f64>,
    gb: Array1<f64>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, init: Init, rng: &mut ChaCha8Rng) -> Self {
        let w = Array2::from_shape_fn((out_dim, in_dim), |_| init.draw(rng, in_dim, out_dim));
        Self {
            w,
            b: Array1::zeros(out_dim),
            gw: Array2::zeros((out_dim, in_dim)),
            gb: Array1::zeros(out_dim),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    /// Accumulates parameter gradients and returns dL/dx.
    pub fn backward(&mut self, x: &Array2<f64>, gy: &Array2<f64>) -> Array2<f64> {
        self.gw += &gy.t().dot(x);
        self.gb += &gy.sum_axis(Axis(0));
        gy.dot(&self.w)
    }

    pub fn zero_grad(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }

    pub fn params(&mut self) -> Vec<ParamView<'_>> {
        vec![
            ParamView {
                value: self.w.as_slice_mut().unwrap(),
                grad: self.gw.as_slice_mut().unwrap(),
            },
            ParamView {
                value: self.b.as_slice_mut().unwrap(),
                grad: self.gb.as_slice_mut().unwrap(),
            },
        ]
    }
}

fn out_len(l: usize, k: usize, stride: usize, pad: usize) -> usize {
    (l + 2 * pad - k) / stride + 1
}

/// x [B, C, L] -> cols [B, Lout, C*K] with cols[b, t, c*K + j] =
/// x_padded[b, c, t*stride + j].
fn im2col1d(x: &Array3<f64>, k: usize, stride: usize, pad: usize) -> Array3<f64> {
    let (b, c, l) = x.dim();
    let lout = out_len(l, k, stride, pad);
    let mut cols = Array3::zeros((b, lout, c * k));
    for bi in 0..b {
        for t in 0..lout {
            for ci in 0..c {
                for j in 0..k {
                    let src = (t * stride + j) as isize - pad as isize;
                    if src >= 0 && (src as usize) < l {
                        cols[[bi, t, ci * k + j]] = x[[bi, ci, src as usize]];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col1d`]: scatter-adds cols back onto [B, C, L].
fn col2im1d(cols: &Array3<f64>, c: usize, l: usize, k: usize, stride: usize, pad: usize) -> Array3<f64> {
    let (b, lpos, _) = cols.dim();
    let mut x = Array3::zeros((b, c, l));
    for bi in 0..b {
        for t in 0..lpos {
            for ci in 0..c {
                for j in 0..k {
                    let dst = (t * stride + j) as isize - pad as isize;
                    if dst >= 0 && (dst as usize) < l {
                        x[[bi, ci, dst as usize]] += cols[[bi, t, ci * k + j]];
                    }
                }
            }
        }
    }
    x
}

/// 1-D convolution along the feature axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv1d {
    /// [out_channels, in_channels, kernel]
    pub w: Array3<f64>,
    pub b: Array1<f64>,
    pub stride: usize,
    pub pad: usize,
    gw: Array3<f64>,
    gb: Array1<f64>,
}

impl Conv1d {
    pub fn new(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_c * k;
        let fan_out = out_c * k;
        let w = Array3::from_shape_fn((out_c, in_c, k), |_| init.draw(rng, fan_in, fan_out));
        Self {
            w,
            b: Array1::zeros(out_c),
            stride,
            pad,
            gw: Array3::zeros((out_c, in_c, k)),
            gb: Array1::zeros(out_c),
        }
    }

    pub fn out_len(&self, l: usize) -> usize {
        out_len(l, self.w.dim().2, self.stride, self.pad)
    }

    pub fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        let (b, _, _) = x.dim();
        let (out_c, in_c, k) = self.w.dim();
        let cols = im2col1d(x, k, self.stride, self.pad);
        let lout = cols.dim().1;
        let cols2 = cols.into_shape_with_order((b * lout, in_c * k)).unwrap();
        let wflat = self.w.view().into_shape_with_order((out_c, in_c * k)).unwrap();
        let y2 = cols2.dot(&wflat.t());
        let mut y = Array3::zeros((b, out_c, lout));
        for bi in 0..b {
            for o in 0..out_c {
                for t in 0..lout {
                    y[[bi, o, t]] = y2[[bi * lout + t, o]] + self.b[o];
                }
            }
        }
        y
    }

    pub fn backward(&mut self, x: &Array3<f64>, gy: &Array3<f64>) -> Array3<f64> {
        let (b, _, l) = x.dim();
        let (out_c, in_c, k) = self.w.dim();
        let (_, _, lout) = gy.dim();
        let cols = im2col1d(x, k, self.stride, self.pad);
        let cols2 = cols.into_shape_with_order((b * lout, in_c * k)).unwrap();

        let mut g2 = Array2::zeros((b * lout, out_c));
        for bi in 0..b {
            for o in 0..out_c {
                for t in 0..lout {
                    g2[[bi * lout + t, o]] = gy[[bi, o, t]];
                }
            }
        }

        let gwf = g2.t().dot(&cols2);
        self.gw += &gwf.into_shape_with_order((out_c, in_c, k)).unwrap();
        self.gb += &g2.sum_axis(Axis(0));

        let wflat = self.w.view().into_shape_with_order((out_c, in_c * k)).unwrap();
        let gcols2 = g2.dot(&wflat);
        let gcols = gcols2.into_shape_with_order((b, lout, in_c * k)).unwrap();
        col2im1d(&gcols, in_c, l, k, self.stride, self.pad)
    }

    pub fn zero_grad(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }

    pub fn params(&mut self) -> Vec<ParamView<'_>> {
        vec![
            ParamView {
                value: self.w.as_slice_mut().unwrap(),
                grad: self.gw.as_slice_mut().unwrap(),
            },
            ParamView {
                value: self.b.as_slice_mut().unwrap(),
                grad: self.gb.as_slice_mut().unwrap(),
            },
        ]
    }
}

/// 1-D transposed convolution (the adjoint map of [`Conv1d`] with the same
/// stride/padding), used by the decoder to upsample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvTranspose1d {
    /// [in_channels, out_channels, kernel]
    pub w: Array3<f64>,
    pub b: Array1<f64>,
    pub stride: usize,
    pub pad: usize,
    gw: Array3<f64>,
    gb: Array1<f64>,
}

impl ConvTranspose1d {
    pub fn new(
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        init: Init,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = in_c * k;
        let fan_out = out_c * k;
        let w = Array3::from_shape_fn((in_c, out_c, k), |_| init.draw(rng, fan_in, fan_out));
        Self {
            w,
            b: Array1::zeros(out_c),
            stride,
            pad,
            gw: Array3::zeros((in_c, out_c, k)),
            gb: Array1::zeros(out_c),
        }
    }

    pub fn out_len(&self, lin: usize) -> usize {
        (lin - 1) * self.stride + self.w.dim().2 - 2 * self.pad
    }

    pub fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        let (b, in_c, lin) = x.dim();
        let (_, out_c, k) = self.w.dim();
        let lout = self.out_len(lin);

        // x2 [B*Lin, in_c]
        let mut x2 = Array2::zeros((b * lin, in_c));
        for bi in 0..b {
            for ci in 0..in_c {
                for t in 0..lin {
                    x2[[bi * lin + t, ci]] = x[[bi, ci, t]];
                }
            }
        }
        let wflat = self.w.view().into_shape_with_order((in_c, out_c * k)).unwrap();
        let cols2 = x2.dot(&wflat);
        let cols = cols2.into_shape_with_order((b, lin, out_c * k)).unwrap();
        let mut y = col2im1d(&cols, out_c, lout, k, self.stride, self.pad);
        for o in 0..out_c {
            let mut lane = y.index_axis_mut(Axis(1), o);
            lane += self.b[o];
        }
        y
    }

    pub fn backward(&mut self, x: &Array3<f64>, gy: &Array3<f64>) -> Array3<f64> {
        let (b, in_c, lin) = x.dim();
        let (_, out_c, k) = self.w.dim();

        // dL/dcols is im2col of gy at the same geometry.
        let gcols = im2col1d(gy, k, self.stride, self.pad);
        debug_assert_eq!(gcols.dim().1, lin);
        let gcols2 = gcols.into_shape_with_order((b * lin, out_c * k)).unwrap();

        let mut x2 = Array2::zeros((b * lin, in_c));
        for bi in 0..b {
            for ci in 0..in_c {
                for t in 0..lin {
                    x2[[bi * lin + t, ci]] = x[[bi, ci, t]];
                }
            }
        }

        let gwf = x2.t().dot(&gcols2);
        self.gw += &gwf.into_shape_with_order((in_c, out_c, k)).unwrap();
        for o in 0..out_c {
            self.gb[o] += gy.index_axis(Axis(1), o).sum();
        }

        let wflat = self.w.view().into_shape_with_order((in_c, out_c * k)).unwrap();
        let gx2 = gcols2.dot(&wflat.t());
        let mut gx = Array3::zeros((b, in_c, lin));
        for bi in 0..b {
            for ci in 0..in_c {
                for t in 0..lin {
                    gx[[bi, ci, t]] = gx2[[bi * lin + t, ci]];
                }
            }
        }
        gx
    }

    pub fn zero_grad(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }

    pub fn params(&mut self) -> Vec<ParamView<'_>> {
        vec![
            ParamView {
                value: self.w.as_slice_mut().unwrap(),
                grad: self.gw.as_slice_mut().unwrap(),
            },
            ParamView {
                value: self.b.as_slice_mut().unwrap(),
                grad: self.gb.as_slice_mut().unwrap(),
            },
        ]
    }
}

/// Non-overlapping 1-D max pooling; ties take the first maximum.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MaxPool1d {
    pub size: usize,
}

impl MaxPool1d {
    pub fn out_len(&self, l: usize) -> usize {
        l / self.size
    }

    /// Returns pooled output and flat argmax positions for backward.
    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, Array3<usize>) {
        let (b, c, l) = x.dim();
        let lout = self.out_len(l);
        let mut y = Array3::zeros((b, c, lout));
        let mut arg = Array3::zeros((b, c, lout));
        for bi in 0..b {
            for ci in 0..c {
                for t in 0..lout {
                    let start = t * self.size;
                    let mut best = start;
                    let mut best_v = x[[bi, ci, start]];
                    for j in start + 1..start + self.size {
                        if x[[bi, ci, j]] > best_v {
                            best_v = x[[bi, ci, j]];
                            best = j;
                        }
                    }
                    y[[bi, ci, t]] = best_v;
                    arg[[bi, ci, t]] = best;
                }
            }
        }
        (y, arg)
    }

    pub fn backward(
        &self,
        arg: &Array3<usize>,
        gy: &Array3<f64>,
        in_len: usize,
    ) -> Array3<f64> {
        let (b, c, lout) = gy.dim();
        let mut gx = Array3::zeros((b, c, in_len));
        for bi in 0..b {
            for ci in 0..c {
                for t in 0..lout {
                    gx[[bi, ci, arg[[bi, ci, t]]]] += gy[[bi, ci, t]];
                }
            }
        }
        gx
    }
}

pub fn relu<D: Dimension>(x: &Array<f64, D>) -> Array<f64, D> {
    x.mapv(|v| v.max(0.0))
}

pub fn relu_grad<D: Dimension>(x: &Array<f64, D>, gy: &Array<f64, D>) -> Array<f64, D> {
    let mut g = gy.clone();
    g.zip_mut_with(x, |gv, &xv| {
        if xv <= 0.0 {
            *gv = 0.0;
        }
    });
    g
}

pub fn leaky_relu<D: Dimension>(x: &Array<f64, D>, alpha: f64) -> Array<f64, D> {
    x.mapv(|v| if v > 0.0 { v } else { alpha * v })
}

pub fn leaky_relu_grad<D: Dimension>(
    x: &Array<f64, D>,
    gy: &Array<f64, D>,
    alpha: f64,
) -> Array<f64, D> {
    let mut g = gy.clone();
    g.zip_mut_with(x, |gv, &xv| {
        if xv <= 0.0 {
            *gv *= alpha;
        }
    });
    g
}

pub fn sigmoid<D: Dimension>(x: &Array<f64, D>) -> Array<f64, D> {
    x.mapv(|v| 1.0 / (1.0 + (-v).exp()))
}

/// Sigmoid gradient in terms of the forward output y: gy * y * (1 - y).
pub fn sigmoid_grad_from_output<D: Dimension>(
    y: &Array<f64, D>,
    gy: &Array<f64, D>,
) -> Array<f64, D> {
    let mut g = gy.clone();
    g.zip_mut_with(y, |gv, &yv| *gv *= yv * (1.0 - yv));
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    /// Central finite difference of loss(x) = sum(forward(x) * proj).
    fn check_close(analytic: f64, numeric: f64, tag: &str) {
        let denom = analytic.abs().max(numeric.abs()).max(1.0);
        assert!(
            ((analytic - numeric) / denom).abs() < 1e-6,
            "{tag}: analytic {analytic} vs numeric {numeric}"
        );
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut rng = rng_from_seed(1);
        let mut layer = Dense::new(4, 3, Init::GlorotUniform, &mut rng);
        let x = Array2::from_shape_fn((2, 4), |_| standard_normal(&mut rng));
        let proj = Array2::from_shape_fn((2, 3), |_| standard_normal(&mut rng));

        layer.zero_grad();
        let gx = layer.backward(&x, &proj);

        let h = 1e-5;
        // Input gradient.
        for i in 0..2 {
            for j in 0..4 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[[i, j]] += h;
                xm[[i, j]] -= h;
                let num = ((&layer.forward(&xp) * &proj).sum()
                    - (&layer.forward(&xm) * &proj).sum())
                    / (2.0 * h);
                check_close(gx[[i, j]], num, "dense gx");
            }
        }
        // Weight gradient (spot check a few entries).
        let gw = layer
            .params()
            .remove(0)
            .grad
            .to_vec();
        for idx in [0usize, 5, 11] {
            let (r, c) = (idx / 4, idx % 4);
            let orig = layer.w[[r, c]];
            layer.w[[r, c]] = orig + h;
            let lp = (&layer.forward(&x) * &proj).sum();
            layer.w[[r, c]] = orig - h;
            let lm = (&layer.forward(&x) * &proj).sum();
            layer.w[[r, c]] = orig;
            check_close(gw[idx], (lp - lm) / (2.0 * h), "dense gw");
        }
    }

    fn conv_loss(layer: &Conv1d, x: &Array3<f64>, proj: &Array3<f64>) -> f64 {
        (&layer.forward(x) * proj).sum()
    }

    #[test]
    fn conv1d_gradients_match_finite_differences() {
        let mut rng = rng_from_seed(2);
        let mut layer = Conv1d::new(2, 3, 4, 2, 1, Init::Normal(0.5), &mut rng);
        let x = Array3::from_shape_fn((2, 2, 8), |_| standard_normal(&mut rng));
        let lout = layer.out_len(8);
        assert_eq!(lout, 4);
        let proj = Array3::from_shape_fn((2, 3, lout), |_| standard_normal(&mut rng));

        layer.zero_grad();
        let gx = layer.backward(&x, &proj);
        let h = 1e-5;
        for bi in 0..2 {
            for ci in 0..2 {
                for t in 0..8 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[[bi, ci, t]] += h;
                    xm[[bi, ci, t]] -= h;
                    let num =
                        (conv_loss(&layer, &xp, &proj) - conv_loss(&layer, &xm, &proj)) / (2.0 * h);
                    check_close(gx[[bi, ci, t]], num, "conv gx");
                }
            }
        }
        let gw_flat: Vec<f64> = layer.gw.iter().cloned().collect();
        for idx in [0usize, 7, 13, 23] {
            let (o, rest) = (idx / 8, idx % 8);
            let (ci, j) = (rest / 4, rest % 4);
            let orig = layer.w[[o, ci, j]];
            layer.w[[o, ci, j]] = orig + h;
            let lp = conv_loss(&layer, &x, &proj);
            layer.w[[o, ci, j]] = orig - h;
            let lm = conv_loss(&layer, &x, &proj);
            layer.w[[o, ci, j]] = orig;
            check_close(gw_flat[idx], (lp - lm) / (2.0 * h), "conv gw");
        }
    }

    #[test]
    fn conv_transpose_gradients_match_finite_differences() {
        let mut rng = rng_from_seed(3);
        let mut layer = ConvTranspose1d::new(3, 2, 4, 2, 1, Init::Normal(0.5), &mut rng);
        let x = Array3::from_shape_fn((2, 3, 4), |_| standard_normal(&mut rng));
        let lout = layer.out_len(4);
        assert_eq!(lout, 8);
        let proj = Array3::from_shape_fn((2, 2, lout), |_| standard_normal(&mut rng));

        layer.zero_grad();
        let gx = layer.backward(&x, &proj);
        let h = 1e-5;
        let loss = |l: &ConvTranspose1d, xx: &Array3<f64>| (&l.forward(xx) * &proj).sum();
        for bi in 0..2 {
            for ci in 0..3 {
                for t in 0..4 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[[bi, ci, t]] += h;
                    xm[[bi, ci, t]] -= h;
                    check_close(
                        gx[[bi, ci, t]],
                        (loss(&layer, &xp) - loss(&layer, &xm)) / (2.0 * h),
                        "deconv gx",
                    );
                }
            }
        }
        let gw_flat: Vec<f64> = layer.gw.iter().cloned().collect();
        for idx in [0usize, 9, 17] {
            let (ci, rest) = (idx / 8, idx % 8);
            let (o, j) = (rest / 4, rest % 4);
            let orig = layer.w[[ci, o, j]];
            layer.w[[ci, o, j]] = orig + h;
            let lp = loss(&layer, &x);
            layer.w[[ci, o, j]] = orig - h;
            let lm = loss(&layer, &x);
            layer.w[[ci, o, j]] = orig;
            check_close(gw_flat[idx], (lp - lm) / (2.0 * h), "deconv gw");
        }
    }

    #[test]
    fn conv_transpose_inverts_conv_geometry() {
        let mut rng = rng_from_seed(4);
        let conv = Conv1d::new(1, 4, 4, 2, 1, Init::Normal(0.1), &mut rng);
        let deconv = ConvTranspose1d::new(4, 1, 4, 2, 1, Init::Normal(0.1), &mut rng);
        for l in [8usize, 16, 24, 48] {
            let lo = conv.out_len(l);
            assert_eq!(lo, l / 2);
            assert_eq!(deconv.out_len(lo), l);
        }
    }

    #[test]
    fn maxpool_forward_and_backward() {
        let x = Array3::from_shape_vec(
            (1, 1, 6),
            vec![1.0, 3.0, 2.0, 2.0, 5.0, 4.0],
        )
        .unwrap();
        let pool = MaxPool1d { size: 2 };
        let (y, arg) = pool.forward(&x);
        assert_eq!(y.as_slice().unwrap(), &[3.0, 2.0, 5.0]);
        // First-max tie break at positions 2,3.
        assert_eq!(arg.as_slice().unwrap(), &[1, 2, 4]);
        let gy = Array3::from_shape_vec((1, 1, 3), vec![1.0, 2.0, 3.0]).unwrap();
        let gx = pool.backward(&arg, &gy, 6);
        assert_eq!(gx.as_slice().unwrap(), &[0.0, 1.0, 2.0, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn activations_and_grads() {
        let x = ndarray::arr1(&[-2.0, 0.0, 3.0]).into_dyn();
        let gy = ndarray::arr1(&[1.0, 1.0, 1.0]).into_dyn();
        assert_eq!(relu(&x).as_slice().unwrap(), &[0.0, 0.0, 3.0]);
        assert_eq!(relu_grad(&x, &gy).as_slice().unwrap(), &[0.0, 0.0, 1.0]);
        let lr = leaky_relu(&x, 0.2);
        assert!((lr[[0]] + 0.4).abs() < 1e-12);
        let s = sigmoid(&x);
        assert!((s[[1]] - 0.5).abs() < 1e-12);
        let sg = sigmoid_grad_from_output(&s, &gy);
        assert!((sg[[1]] - 0.25).abs() < 1e-12);
    }
}
