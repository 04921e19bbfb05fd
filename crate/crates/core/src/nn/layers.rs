//! Forward and backward passes for the five layer types of the classifier.
//!
//! Forward functions that are followed by a backward pass return an explicit
//! cache; layers themselves are never mutated by forward/backward, except for
//! batch-norm running statistics in training mode.

use rand::Rng;

use super::tensor::{matmul, Real, Tensor};
use super::{NnError, Result};

/// `U(−1/√fan_in, 1/√fan_in)`, the usual framework default for both weights
/// and biases. Larger (He) bounds slow Adam down behind batch norm, which
/// makes the update size relative to the weight norm smaller.
fn fan_in_uniform<T: Real, R: Rng>(rng: &mut R, fan_in: usize, n: usize) -> Vec<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| T::lit(rng.gen_range(-bound..bound))).collect()
}

/// 2-D cross-correlation with square kernels, zero padding and a fixed stride.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    /// `(C_out, C_in, k, k)`.
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    input_shape: [usize; 4],
    out_hw: (usize, usize),
    /// Per-sample im2col matrices, each `(C_in·k·k) × (H'·W')`.
    cols: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    /// Fan-in uniform weights and bias.
    pub fn new<R: Rng>(c_in: usize, c_out: usize, kernel: usize, stride: usize, padding: usize, rng: &mut R) -> Self {
        let fan_in = c_in * kernel * kernel;
        let weight = Tensor::from_vec(&[c_out, c_in, kernel, kernel], fan_in_uniform(rng, fan_in, c_out * fan_in))
            .expect("consistent shape");
        let bias = fan_in_uniform(rng, fan_in, c_out);
        Self { weight, bias, stride, padding }
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }

    /// Output spatial extent: `floor((H + 2p - k) / s) + 1`.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let k = self.kernel();
        let (hp, wp) = (h + 2 * self.padding, w + 2 * self.padding);
        if hp < k || wp < k || self.stride == 0 {
            return Err(NnError::ShapeMismatch(format!("{h}×{w} input too small for a {k}×{k} kernel")));
        }
        Ok(((hp - k) / self.stride + 1, (wp - k) / self.stride + 1))
    }

    fn im2col(&self, x: &[T], c_in: usize, h: usize, w: usize, oh: usize, ow: usize, cols: &mut [T]) {
        let k = self.kernel();
        let (s, p) = (self.stride as isize, self.padding as isize);
        let plane = oh * ow;
        for ci in 0..c_in {
            let xc = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * plane..][..plane];
                    for oy in 0..oh {
                        let iy = oy as isize * s - p + ky as isize;
                        let dst = &mut row[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= h as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src = &xc[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = ox as isize * s - p + kx as isize;
                            *d = if ix < 0 || ix >= w as isize { T::zero() } else { src[ix as usize] };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[T], c_in: usize, h: usize, w: usize, oh: usize, ow: usize, dx: &mut [T]) {
        let k = self.kernel();
        let (s, p) = (self.stride as isize, self.padding as isize);
        let plane = oh * ow;
        for ci in 0..c_in {
            let dxc = &mut dx[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ci * k + ky) * k + kx) * plane..][..plane];
                    for oy in 0..oh {
                        let iy = oy as isize * s - p + ky as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut dxc[iy as usize * w..(iy as usize + 1) * w];
                        for ox in 0..ow {
                            let ix = ox as isize * s - p + kx as isize;
                            if ix >= 0 && ix < w as isize {
                                dst[ix as usize] += row[oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }

    fn run(&self, x: &Tensor<T>, keep_cols: bool) -> Result<(Tensor<T>, ConvCache<T>)> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.c_in() {
            return Err(NnError::ShapeMismatch(format!("conv expects {} input channels, got {c}", self.c_in())));
        }
        let (oh, ow) = self.output_hw(h, w)?;
        let k = self.kernel();
        let ckk = c * k * k;
        let plane = oh * ow;
        let c_out = self.c_out();
        let mut out = vec![T::zero(); n * c_out * plane];
        let mut cols = vec![T::zero(); if keep_cols { n * ckk * plane } else { ckk * plane }];
        for i in 0..n {
            let col = if keep_cols { &mut cols[i * ckk * plane..(i + 1) * ckk * plane] } else { &mut cols[..] };
            self.im2col(&x.data()[i * c * h * w..(i + 1) * c * h * w], c, h, w, oh, ow, col);
            let y = &mut out[i * c_out * plane..(i + 1) * c_out * plane];
            for (row, &b) in y.chunks_exact_mut(plane).zip(&self.bias) {
                row.fill(b);
            }
            matmul(c_out, ckk, plane, self.weight.data(), false, col, false, y, true);
        }
        let out = Tensor::from_vec(&[n, c_out, oh, ow], out)?;
        Ok((out, ConvCache { input_shape: [n, c, h, w], out_hw: (oh, ow), cols: if keep_cols { cols } else { Vec::new() } }))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        self.run(x, true)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(x, false)?.0)
    }

    pub fn backward(&self, grad_out: &Tensor<T>, cache: &ConvCache<T>) -> Result<ConvGrads<T>> {
        let [n, c, h, w] = cache.input_shape;
        let (oh, ow) = cache.out_hw;
        let c_out = self.c_out();
        if grad_out.shape() != [n, c_out, oh, ow] {
            return Err(NnError::ShapeMismatch(format!(
                "conv grad {:?} does not match output {:?}",
                grad_out.shape(),
                [n, c_out, oh, ow]
            )));
        }
        let k = self.kernel();
        let ckk = c * k * k;
        let plane = oh * ow;
        let mut gw = vec![T::zero(); c_out * ckk];
        let mut gb = vec![T::zero(); c_out];
        let mut gx = vec![T::zero(); n * c * h * w];
        let mut gcols = vec![T::zero(); ckk * plane];
        for i in 0..n {
            let g = &grad_out.data()[i * c_out * plane..(i + 1) * c_out * plane];
            let col = &cache.cols[i * ckk * plane..(i + 1) * ckk * plane];
            for (b, row) in gb.iter_mut().zip(g.chunks_exact(plane)) {
                *b += row.iter().copied().sum::<T>();
            }
            matmul(c_out, plane, ckk, g, false, col, true, &mut gw, true);
            matmul(ckk, c_out, plane, self.weight.data(), true, g, false, &mut gcols, false);
            self.col2im(&gcols, c, h, w, oh, ow, &mut gx[i * c * h * w..(i + 1) * c * h * w]);
        }
        Ok(ConvGrads {
            input: Tensor::from_vec(&[n, c, h, w], gx)?,
            weight: Tensor::from_vec(self.weight.shape(), gw)?,
            bias: gb,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Per-channel batch normalization over `N × H × W`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: T,
    pub momentum: T,
}

#[derive(Debug, Clone)]
pub struct BnCache<T> {
    shape: [usize; 4],
    xhat: Vec<T>,
    inv_std: Vec<T>,
    mode: BnMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Real> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps: T::lit(1e-5),
            momentum: T::lit(0.1),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes with batch statistics (biased variance) in `Train` mode,
    /// updating the running estimates; uses the running estimates in `Eval`.
    pub fn forward(&mut self, x: &Tensor<T>, mode: BnMode) -> Result<(Tensor<T>, BnCache<T>)> {
        let (n, c, h, w) = x.dims4()?;
        if c != self.channels() {
            return Err(NnError::ShapeMismatch(format!("batch norm expects {} channels, got {c}", self.channels())));
        }
        let plane = h * w;
        let count = n * plane;
        let xd = x.data();
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        let mut inv_stds = vec![T::zero(); c];
        for ch in 0..c {
            let channel = (0..n).flat_map(|i| xd[(i * c + ch) * plane..(i * c + ch + 1) * plane].iter().copied());
            let (mean, var) = match mode {
                BnMode::Train => {
                    let total = T::from_usize(count).unwrap();
                    let mean = channel.clone().sum::<T>() / total;
                    let var = channel.map(|v| (v - mean) * (v - mean)).sum::<T>() / total;
                    let m = self.momentum;
                    // Running variance tracks the unbiased estimate.
                    let unbiased = if count > 1 { var * total / (total - T::one()) } else { var };
                    self.running_mean[ch] = (T::one() - m) * self.running_mean[ch] + m * mean;
                    self.running_var[ch] = (T::one() - m) * self.running_var[ch] + m * unbiased;
                    (mean, var)
                }
                BnMode::Eval => (self.running_mean[ch], self.running_var[ch].max(T::zero())),
            };
            let inv_std = T::one() / (var + self.eps).sqrt();
            inv_stds[ch] = inv_std;
            for i in 0..n {
                let r = (i * c + ch) * plane..(i * c + ch + 1) * plane;
                for ((o, xh), &v) in out[r.clone()].iter_mut().zip(&mut xhat[r.clone()]).zip(&xd[r]) {
                    *xh = (v - mean) * inv_std;
                    *o = self.gamma[ch] * *xh + self.beta[ch];
                }
            }
        }
        Ok((Tensor::from_vec(x.shape(), out)?, BnCache { shape: [n, c, h, w], xhat, inv_std: inv_stds, mode }))
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        // Eval mode never touches the running statistics.
        let mut frozen = self.clone();
        Ok(frozen.forward(x, BnMode::Eval)?.0)
    }

    pub fn backward(&self, grad_out: &Tensor<T>, cache: &BnCache<T>) -> Result<BnGrads<T>> {
        let [n, c, h, w] = cache.shape;
        if grad_out.shape() != cache.shape {
            return Err(NnError::ShapeMismatch(format!("batch norm grad {:?} vs {:?}", grad_out.shape(), cache.shape)));
        }
        let plane = h * w;
        let total = T::from_usize(n * plane).unwrap();
        let g = grad_out.data();
        let mut gx = vec![T::zero(); g.len()];
        let mut ggamma = vec![T::zero(); c];
        let mut gbeta = vec![T::zero(); c];
        for ch in 0..c {
            let ranges = || (0..n).map(move |i| (i * c + ch) * plane..(i * c + ch + 1) * plane);
            let (mut sum_g, mut sum_gx) = (T::zero(), T::zero());
            for r in ranges() {
                for (&gi, &xh) in g[r.clone()].iter().zip(&cache.xhat[r]) {
                    sum_g += gi;
                    sum_gx += gi * xh;
                }
            }
            ggamma[ch] = sum_gx;
            gbeta[ch] = sum_g;
            let scale = self.gamma[ch] * cache.inv_std[ch];
            for r in ranges() {
                for ((d, &gi), &xh) in gx[r.clone()].iter_mut().zip(&g[r.clone()]).zip(&cache.xhat[r]) {
                    *d = match cache.mode {
                        BnMode::Train => scale * (gi - sum_g / total - xh * sum_gx / total),
                        BnMode::Eval => scale * gi,
                    };
                }
            }
        }
        Ok(BnGrads { input: Tensor::from_vec(&cache.shape, gx)?, gamma: ggamma, beta: gbeta })
    }
}

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.data().iter().map(|&v| v.max(T::zero())).collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

/// Gates `grad_out` by `input > 0`; `input` may be the pre- or post-activation.
pub fn relu_backward<T: Real>(grad_out: &Tensor<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != input.shape() {
        return Err(NnError::ShapeMismatch(format!("relu grad {:?} vs {:?}", grad_out.shape(), input.shape())));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

/// Global average over each channel: `(N, C, H, W) -> (N, C, 1, 1)`.
pub fn adaptive_avg_pool<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4()?;
    let area = T::from_usize(h * w).unwrap();
    let data = x.data().chunks_exact(h * w).map(|p| p.iter().copied().sum::<T>() / area).collect();
    Tensor::from_vec(&[n, c, 1, 1], data)
}

pub fn adaptive_avg_pool_backward<T: Real>(grad_out: &Tensor<T>, input_shape: &[usize]) -> Result<Tensor<T>> {
    let &[n, c, h, w] = input_shape else {
        return Err(NnError::ShapeMismatch(format!("expected NCHW input shape, got {input_shape:?}")));
    };
    if grad_out.numel() != n * c {
        return Err(NnError::ShapeMismatch(format!("pool grad {:?} for input {input_shape:?}", grad_out.shape())));
    }
    let area = T::from_usize(h * w).unwrap();
    let mut data = Vec::with_capacity(n * c * h * w);
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g / area, h * w));
    }
    Tensor::from_vec(input_shape, data)
}

/// Fully connected layer `y = x Wᵀ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `(out_features, in_features)`.
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    pub fn new<R: Rng>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        let weight = Tensor::from_vec(&[out_features, in_features], fan_in_uniform(rng, in_features, in_features * out_features))
            .expect("consistent shape");
        let bias = fan_in_uniform(rng, in_features, out_features);
        Self { weight, bias }
    }

    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, f) = x.dims2()?;
        if f != self.in_features() {
            return Err(NnError::ShapeMismatch(format!("linear expects {} features, got {f}", self.in_features())));
        }
        let k = self.out_features();
        let mut out: Vec<T> = (0..n).flat_map(|_| self.bias.iter().copied()).collect();
        matmul(n, f, k, x.data(), false, self.weight.data(), true, &mut out, true);
        Tensor::from_vec(&[n, k], out)
    }

    pub fn backward(&self, grad_out: &Tensor<T>, input: &Tensor<T>) -> Result<LinearGrads<T>> {
        let (n, f) = input.dims2()?;
        let k = self.out_features();
        if grad_out.shape() != [n, k] {
            return Err(NnError::ShapeMismatch(format!("linear grad {:?}, expected {:?}", grad_out.shape(), [n, k])));
        }
        let g = grad_out.data();
        let mut gx = vec![T::zero(); n * f];
        matmul(n, k, f, g, false, self.weight.data(), false, &mut gx, false);
        let mut gw = vec![T::zero(); k * f];
        matmul(k, n, f, g, true, input.data(), false, &mut gw, false);
        let mut gb = vec![T::zero(); k];
        for row in g.chunks_exact(k) {
            for (b, &v) in gb.iter_mut().zip(row) {
                *b += v;
            }
        }
        Ok(LinearGrads { input: Tensor::from_vec(input.shape(), gx)?, weight: Tensor::from_vec(&[k, f], gw)?, bias: gb })
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax<T: Real>(logits: &[T], k: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        out.extend(row.iter().map(|&v| (v - max).exp()));
        let z: T = out[start..].iter().copied().sum();
        out[start..].iter_mut().for_each(|v| *v /= z);
    }
    out
}

/// Mean cross-entropy over the batch and its gradient `(softmax − onehot) / N`.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let (n, k) = logits.dims2()?;
    if labels.len() != n {
        return Err(NnError::ShapeMismatch(format!("{n} logit rows but {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(NnError::LabelOutOfRange { label: bad, n_classes: k });
    }
    let batch = T::from_usize(n).unwrap();
    let mut grad = softmax(logits.data(), k);
    let mut loss = T::zero();
    for (i, (&label, row)) in labels.iter().zip(logits.data().chunks_exact(k)).enumerate() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let log_z = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        loss += log_z - row[label];
        grad[i * k + label] -= T::one();
    }
    grad.iter_mut().for_each(|g| *g /= batch);
    Ok((loss / batch, Tensor::from_vec(&[n, k], grad)?))
}
