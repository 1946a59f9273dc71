//! Dilated 1-D convolution, batch normalization and the residual block built
//! from them. Feature maps are `channels x (windows * width)` with each window's
//! frames contiguous; convolutions never read across a window boundary.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{gemm, Mat, Real, Strided};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply<T: Real>(self, x: &mut Mat<T>) {
        if self == Activation::Relu {
            for v in x.as_mut_slice() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
    }

    /// Masks `grad` in place given the activation's output.
    fn backward<T: Real>(self, out: &Mat<T>, grad: &mut Mat<T>) {
        if self == Activation::Relu {
            for (g, &y) in grad.as_mut_slice().iter_mut().zip(out.as_slice()) {
                if y <= T::zero() {
                    *g = T::zero();
                }
            }
        }
    }
}

fn check_width<T: Real>(x: &Mat<T>, width: usize) -> Result<usize> {
    if width == 0 || x.cols() % width != 0 {
        return Err(Error::shape(format!(
            "{} frames do not split into windows of {width}",
            x.cols()
        )));
    }
    Ok(x.cols() / width)
}

/// Same-length, zero-padded, non-causal dilated convolution.
///
/// `out[c, f] = bias[c] + sum over c', k of weight[k][c][c'] * in[c', f + (k - taps/2) * dilation]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T> {
    pub c_in: usize,
    pub c_out: usize,
    pub taps: usize,
    pub dilation: usize,
    /// Layout `[tap][out][in]`.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv1d<T> {
    pub fn zeros(c_in: usize, c_out: usize, taps: usize, dilation: usize) -> Self {
        assert!(taps % 2 == 1, "tap count must be odd");
        Self {
            c_in,
            c_out,
            taps,
            dilation,
            weight: vec![T::zero(); taps * c_out * c_in],
            bias: vec![T::zero(); c_out],
        }
    }

    /// Fan-in scaled uniform weights, zero bias.
    pub fn init(&mut self, rng: &mut impl Rng) {
        let bound = 1.0 / ((self.c_in * self.taps) as f64).sqrt();
        for w in &mut self.weight {
            *w = T::of(rng.random_range(-bound..bound));
        }
        self.bias.fill(T::zero());
    }

    fn offset(&self, tap: usize) -> isize {
        (tap as isize - (self.taps / 2) as isize) * self.dilation as isize
    }

    fn tap_view(&self, tap: usize, transposed: bool) -> Strided {
        let (rows, cols, rs, cs) = if transposed {
            (self.c_in, self.c_out, 1, self.c_in)
        } else {
            (self.c_out, self.c_in, self.c_in, 1)
        };
        Strided {
            offset: tap * self.c_out * self.c_in,
            rows,
            cols,
            rs,
            cs,
        }
    }

    /// For tap offset `o`, output frames `lo..hi` of a window read input frames `lo+o..hi+o`.
    fn valid(width: usize, o: isize) -> Option<(usize, usize)> {
        let lo = (-o).max(0) as usize;
        let hi = (width as isize - o.max(0)).max(0) as usize;
        (lo < hi).then_some((lo, hi))
    }

    pub fn forward(&self, x: &Mat<T>, width: usize) -> Result<Mat<T>> {
        if x.rows() != self.c_in {
            return Err(Error::shape(format!(
                "convolution expects {} input channels, got {}",
                self.c_in,
                x.rows()
            )));
        }
        let windows = check_width(x, width)?;
        let n = x.cols();
        let mut out = Mat::from_fn(self.c_out, n, |c, _| self.bias[c]);
        for tap in 0..self.taps {
            let o = self.offset(tap);
            let Some((lo, hi)) = Self::valid(width, o) else { continue };
            for w in 0..windows {
                let base = w * width;
                let src = Strided {
                    offset: (base as isize + lo as isize + o) as usize,
                    rows: self.c_in,
                    cols: hi - lo,
                    rs: n,
                    cs: 1,
                };
                let dst = Strided {
                    offset: base + lo,
                    rows: self.c_out,
                    cols: hi - lo,
                    rs: n,
                    cs: 1,
                };
                gemm(
                    T::one(),
                    &self.weight,
                    self.tap_view(tap, false),
                    x.as_slice(),
                    src,
                    T::one(),
                    out.as_mut_slice(),
                    dst,
                );
            }
        }
        Ok(out)
    }

    /// Accumulates weight and bias gradients; returns the input gradient if asked.
    pub fn backward(&self, x: &Mat<T>, width: usize, dy: &Mat<T>, grad: &mut ConvGrad<T>, need_dx: bool) -> Option<Mat<T>> {
        let n = x.cols();
        let windows = n / width;
        for c in 0..self.c_out {
            let s: T = dy.row(c).iter().copied().sum();
            grad.bias[c] = grad.bias[c] + s;
        }
        let mut dx = need_dx.then(|| Mat::zeros(self.c_in, n));
        for tap in 0..self.taps {
            let o = self.offset(tap);
            let Some((lo, hi)) = Self::valid(width, o) else { continue };
            let len = hi - lo;
            for w in 0..windows {
                let base = w * width;
                let src = (base as isize + lo as isize + o) as usize;
                let dy_view = Strided {
                    offset: base + lo,
                    rows: self.c_out,
                    cols: len,
                    rs: n,
                    cs: 1,
                };
                // dW_tap += dy[:, window] * x[:, shifted window]^T
                let xt = Strided {
                    offset: src,
                    rows: len,
                    cols: self.c_in,
                    rs: 1,
                    cs: n,
                };
                gemm(
                    T::one(),
                    dy.as_slice(),
                    dy_view,
                    x.as_slice(),
                    xt,
                    T::one(),
                    &mut grad.weight,
                    self.tap_view(tap, false),
                );
                if let Some(dx) = dx.as_mut() {
                    let dst = Strided {
                        offset: src,
                        rows: self.c_in,
                        cols: len,
                        rs: n,
                        cs: 1,
                    };
                    gemm(
                        T::one(),
                        &self.weight,
                        self.tap_view(tap, true),
                        dy.as_slice(),
                        dy_view,
                        T::one(),
                        dx.as_mut_slice(),
                        dst,
                    );
                }
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrad<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvGrad<T> {
    pub fn zeros_like(conv: &Conv1d<T>) -> Self {
        Self {
            weight: vec![T::zero(); conv.weight.len()],
            bias: vec![T::zero(); conv.bias.len()],
        }
    }
}

/// Per-channel batch normalization over all frames of all windows.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: f64,
    /// Weight of the old running value in each update.
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct BnCache<T> {
    xhat: Mat<T>,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize, eps: f64, momentum: f64) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps,
            momentum,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn normalize(&self, x: &Mat<T>, mean: &[f64], inv_std: &[f64]) -> (Mat<T>, Mat<T>) {
        let mut xhat = Mat::zeros(x.rows(), x.cols());
        let mut y = Mat::zeros(x.rows(), x.cols());
        for c in 0..x.rows() {
            let (m, s) = (T::of(mean[c]), T::of(inv_std[c]));
            let (g, b) = (self.gamma[c], self.beta[c]);
            for ((h, o), &v) in xhat.row_mut(c).iter_mut().zip(y.row_mut(c)).zip(x.row(c)) {
                *h = (v - m) * s;
                *o = g * *h + b;
            }
        }
        (xhat, y)
    }

    /// Normalizes with batch statistics.
    pub fn forward_train(&self, x: &Mat<T>) -> (Mat<T>, BnCache<T>) {
        let n = x.cols() as f64;
        let mut mean = vec![0.0; x.rows()];
        let mut var = vec![0.0; x.rows()];
        for c in 0..x.rows() {
            let row = x.row(c);
            let m = row.iter().map(|v| v.f64()).sum::<f64>() / n;
            mean[c] = m;
            var[c] = row.iter().map(|v| (v.f64() - m).powi(2)).sum::<f64>() / n;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let (xhat, y) = self.normalize(x, &mean, &inv_std);
        (y, BnCache { xhat, inv_std, mean, var })
    }

    /// Normalizes with the running statistics.
    pub fn forward_eval(&self, x: &Mat<T>) -> Mat<T> {
        let mean: Vec<f64> = self.running_mean.iter().map(|v| v.f64()).collect();
        let inv_std: Vec<f64> = self
            .running_var
            .iter()
            .map(|v| 1.0 / (v.f64() + self.eps).sqrt())
            .collect();
        self.normalize(x, &mean, &inv_std).1
    }

    pub fn update_running(&mut self, cache: &BnCache<T>) {
        let m = self.momentum;
        for c in 0..self.channels() {
            self.running_mean[c] = T::of(m * self.running_mean[c].f64() + (1.0 - m) * cache.mean[c]);
            self.running_var[c] = T::of(m * self.running_var[c].f64() + (1.0 - m) * cache.var[c]);
        }
    }

    pub fn backward(&self, cache: &BnCache<T>, dy: &Mat<T>, grad: &mut BnGrad<T>) -> Mat<T> {
        let n = dy.cols() as f64;
        let mut dx = Mat::zeros(dy.rows(), dy.cols());
        for c in 0..dy.rows() {
            let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
            for (&g, &h) in dy.row(c).iter().zip(cache.xhat.row(c)) {
                sum_dy += g.f64();
                sum_dy_xhat += g.f64() * h.f64();
            }
            grad.gamma[c] = grad.gamma[c] + T::of(sum_dy_xhat);
            grad.beta[c] = grad.beta[c] + T::of(sum_dy);
            let k = self.gamma[c].f64() * cache.inv_std[c] / n;
            let (a, b) = (T::of(k * n), T::of(k * sum_dy));
            let cc = T::of(k * sum_dy_xhat);
            for ((d, &g), &h) in dx.row_mut(c).iter_mut().zip(dy.row(c)).zip(cache.xhat.row(c)) {
                *d = a * g - b - cc * h;
            }
        }
        dx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnGrad<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

/// Convolution, activation, then optional batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    pub conv: Conv1d<T>,
    pub act: Activation,
    pub bn: Option<BatchNorm<T>>,
}

#[derive(Debug, Clone)]
pub struct LayerCache<T> {
    input: Mat<T>,
    activated: Mat<T>,
    bn: Option<BnCache<T>>,
}

impl<T: Real> LayerCache<T> {
    /// Frame count of the cached forward pass.
    pub fn cols(&self) -> usize {
        self.input.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T> {
    pub conv: ConvGrad<T>,
    pub bn: Option<BnGrad<T>>,
}

impl<T: Real> ConvLayer<T> {
    pub fn forward_train(&self, x: &Mat<T>, width: usize) -> Result<(Mat<T>, LayerCache<T>)> {
        let mut a = self.conv.forward(x, width)?;
        self.act.apply(&mut a);
        let (y, bn) = match &self.bn {
            Some(bn) => {
                let (y, c) = bn.forward_train(&a);
                (y, Some(c))
            }
            None => (a.clone(), None),
        };
        Ok((
            y,
            LayerCache {
                input: x.clone(),
                activated: a,
                bn,
            },
        ))
    }

    pub fn forward_eval(&self, x: &Mat<T>, width: usize) -> Result<Mat<T>> {
        let mut a = self.conv.forward(x, width)?;
        self.act.apply(&mut a);
        Ok(match &self.bn {
            Some(bn) => bn.forward_eval(&a),
            None => a,
        })
    }

    pub fn update_running(&mut self, cache: &LayerCache<T>) {
        if let (Some(bn), Some(c)) = (self.bn.as_mut(), cache.bn.as_ref()) {
            bn.update_running(c);
        }
    }

    pub fn zero_grad(&self) -> LayerGrad<T> {
        LayerGrad {
            conv: ConvGrad::zeros_like(&self.conv),
            bn: self.bn.as_ref().map(|bn| BnGrad {
                gamma: vec![T::zero(); bn.channels()],
                beta: vec![T::zero(); bn.channels()],
            }),
        }
    }

    pub fn backward(&self, cache: &LayerCache<T>, width: usize, dy: &Mat<T>, grad: &mut LayerGrad<T>, need_dx: bool) -> Option<Mat<T>> {
        let mut da = match (&self.bn, &cache.bn, grad.bn.as_mut()) {
            (Some(bn), Some(c), Some(g)) => bn.backward(c, dy, g),
            _ => dy.clone(),
        };
        self.act.backward(&cache.activated, &mut da);
        self.conv.backward(&cache.input, width, &da, &mut grad.conv, need_dx)
    }

    /// Trainable tensors in serialization order.
    pub fn params(&self) -> Vec<&Vec<T>> {
        let mut v = vec![&self.conv.weight, &self.conv.bias];
        if let Some(bn) = &self.bn {
            v.push(&bn.gamma);
            v.push(&bn.beta);
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut v = vec![&mut self.conv.weight, &mut self.conv.bias];
        if let Some(bn) = &mut self.bn {
            v.push(&mut bn.gamma);
            v.push(&mut bn.beta);
        }
        v
    }

    pub fn buffers(&self) -> Vec<&Vec<T>> {
        self.bn
            .as_ref()
            .map(|bn| vec![&bn.running_mean, &bn.running_var])
            .unwrap_or_default()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<T>> {
        self.bn
            .as_mut()
            .map(|bn| vec![&mut bn.running_mean, &mut bn.running_var])
            .unwrap_or_default()
    }
}

impl<T: Real> LayerGrad<T> {
    pub fn tensors(&self) -> Vec<&Vec<T>> {
        let mut v = vec![&self.conv.weight, &self.conv.bias];
        if let Some(bn) = &self.bn {
            v.push(&bn.gamma);
            v.push(&bn.beta);
        }
        v
    }
}

/// Two same-dilation layers with a skip connection around both.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock<T> {
    pub first: ConvLayer<T>,
    pub second: ConvLayer<T>,
}

#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    first: LayerCache<T>,
    second: LayerCache<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrad<T> {
    pub first: LayerGrad<T>,
    pub second: LayerGrad<T>,
}

impl<T: Real> ConvBlock<T> {
    pub fn new(channels: usize, taps: usize, dilation: usize, act: Activation, eps: f64, momentum: f64) -> Self {
        let layer = || ConvLayer {
            conv: Conv1d::zeros(channels, channels, taps, dilation),
            act,
            bn: Some(BatchNorm::new(channels, eps, momentum)),
        };
        Self {
            first: layer(),
            second: layer(),
        }
    }

    pub fn init(&mut self, rng: &mut impl Rng) {
        self.first.conv.init(rng);
        self.second.conv.init(rng);
    }

    pub fn forward_train(&self, x: &Mat<T>, width: usize) -> Result<(Mat<T>, BlockCache<T>)> {
        let (h, first) = self.first.forward_train(x, width)?;
        let (mut y, second) = self.second.forward_train(&h, width)?;
        y.add_assign(x);
        Ok((y, BlockCache { first, second }))
    }

    pub fn forward_eval(&self, x: &Mat<T>, width: usize) -> Result<Mat<T>> {
        let h = self.first.forward_eval(x, width)?;
        let mut y = self.second.forward_eval(&h, width)?;
        y.add_assign(x);
        Ok(y)
    }

    pub fn update_running(&mut self, cache: &BlockCache<T>) {
        self.first.update_running(&cache.first);
        self.second.update_running(&cache.second);
    }

    pub fn zero_grad(&self) -> BlockGrad<T> {
        BlockGrad {
            first: self.first.zero_grad(),
            second: self.second.zero_grad(),
        }
    }

    pub fn backward(&self, cache: &BlockCache<T>, width: usize, dy: &Mat<T>, grad: &mut BlockGrad<T>) -> Mat<T> {
        let dh = self
            .second
            .backward(&cache.second, width, dy, &mut grad.second, true)
            .expect("input gradient requested");
        let mut dx = self
            .first
            .backward(&cache.first, width, &dh, &mut grad.first, true)
            .expect("input gradient requested");
        dx.add_assign(dy);
        dx
    }

    pub fn params(&self) -> Vec<&Vec<T>> {
        let mut v = self.first.params();
        v.extend(self.second.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut v = self.first.params_mut();
        v.extend(self.second.params_mut());
        v
    }

    pub fn buffers(&self) -> Vec<&Vec<T>> {
        let mut v = self.first.buffers();
        v.extend(self.second.buffers());
        v
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut v = self.first.buffers_mut();
        v.extend(self.second.buffers_mut());
        v
    }
}

impl<T: Real> BlockGrad<T> {
    pub fn tensors(&self) -> Vec<&Vec<T>> {
        let mut v = self.first.tensors();
        v.extend(self.second.tensors());
        v
    }
}
