//! Layers with hand-written backward passes.
//!
//! Activations are `rows × channels × len` tensors (dense features use
//! `len = 1`). Convolutions and dense layers share one affine
//! implementation that is either deterministic or mean-field Gaussian. The
//! Gaussian variant samples activations rather than weights: for input `x`
//! the pre-activation is normal with mean `op(x, μ) + μ_b` and variance
//! `op(x², σ²) + σ_b²`, so one draw per output element suffices.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, channels: usize, len: usize) -> Self {
        Self {
            rows,
            channels,
            len,
            data: vec![0.0; rows * channels * len],
        }
    }

    pub fn from_data(rows: usize, channels: usize, len: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * channels * len, "tensor data does not match its shape");
        Self { rows, channels, len, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let n = self.channels * self.len;
        &self.data[r * n..(r + 1) * n]
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    fn same_shape(&self) -> Self {
        Self::zeros(self.rows, self.channels, self.len)
    }
}

/// A trainable array and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn new(value: Vec<f64>) -> Self {
        let grad = vec![0.0; value.len()];
        Self { value, grad }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse of [`softplus`].
pub fn softplus_inv(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

/// KL[N(μ, σ²) ‖ N(0, σ_p²)].
pub fn gaussian_kl(mu: f64, sigma: f64, prior_sigma: f64) -> f64 {
    (prior_sigma / sigma).ln() + (sigma * sigma + mu * mu) / (2.0 * prior_sigma * prior_sigma) - 0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AffineKind {
    /// 1-D convolution with "same" zero padding.
    Conv { input: usize, output: usize, kernel: usize },
    Dense { input: usize, output: usize },
}

impl AffineKind {
    pub fn weight_count(self) -> usize {
        match self {
            AffineKind::Conv { input, output, kernel } => input * output * kernel,
            AffineKind::Dense { input, output } => input * output,
        }
    }

    pub fn fan_in(self) -> usize {
        match self {
            AffineKind::Conv { input, kernel, .. } => input * kernel,
            AffineKind::Dense { input, .. } => input,
        }
    }

    pub fn outputs(self) -> usize {
        match self {
            AffineKind::Conv { output, .. } | AffineKind::Dense { output, .. } => output,
        }
    }

    fn forward(self, x: &Tensor, w: &[f64], b: &[f64]) -> Tensor {
        match self {
            AffineKind::Conv { input, output, kernel } => {
                assert_eq!(x.channels, input, "convolution input channels");
                let l = x.len;
                let pad = kernel / 2;
                let mut y = Tensor::zeros(x.rows, output, l);
                for n in 0..x.rows {
                    for o in 0..output {
                        let yo = &mut y.data[(n * output + o) * l..(n * output + o + 1) * l];
                        yo.iter_mut().for_each(|v| *v = b[o]);
                        for i in 0..input {
                            let xi = &x.data[(n * input + i) * l..(n * input + i + 1) * l];
                            for j in 0..kernel {
                                let wv = w[(o * input + i) * kernel + j];
                                let (t0, t1, s0) = shift_range(l, j, pad);
                                for (yv, xv) in yo[t0..t1].iter_mut().zip(&xi[s0..s0 + (t1 - t0)]) {
                                    *yv += wv * xv;
                                }
                            }
                        }
                    }
                }
                y
            }
            AffineKind::Dense { input, output } => {
                assert_eq!(x.channels * x.len, input, "dense input features");
                let mut y = Tensor::zeros(x.rows, output, 1);
                for n in 0..x.rows {
                    let xr = x.row(n);
                    for o in 0..output {
                        let wo = &w[o * input..(o + 1) * input];
                        y.data[n * output + o] = b[o] + wo.iter().zip(xr).map(|(a, c)| a * c).sum::<f64>();
                    }
                }
                y
            }
        }
    }

    /// Adds dL/dw and dL/db for upstream gradient `gy` at input `x`.
    fn backward_params(self, x: &Tensor, gy: &Tensor, gw: &mut [f64], gb: &mut [f64]) {
        match self {
            AffineKind::Conv { input, output, kernel } => {
                let l = x.len;
                let pad = kernel / 2;
                for n in 0..x.rows {
                    for o in 0..output {
                        let go = &gy.data[(n * output + o) * l..(n * output + o + 1) * l];
                        gb[o] += go.iter().sum::<f64>();
                        for i in 0..input {
                            let xi = &x.data[(n * input + i) * l..(n * input + i + 1) * l];
                            for j in 0..kernel {
                                let (t0, t1, s0) = shift_range(l, j, pad);
                                gw[(o * input + i) * kernel + j] +=
                                    go[t0..t1].iter().zip(&xi[s0..s0 + (t1 - t0)]).map(|(a, c)| a * c).sum::<f64>();
                            }
                        }
                    }
                }
            }
            AffineKind::Dense { input, output } => {
                for n in 0..x.rows {
                    let xr = x.row(n);
                    for o in 0..output {
                        let g = gy.data[n * output + o];
                        gb[o] += g;
                        for (gwv, xv) in gw[o * input..(o + 1) * input].iter_mut().zip(xr) {
                            *gwv += g * xv;
                        }
                    }
                }
            }
        }
    }

    /// dL/dx for upstream gradient `gy`, added into `gx`.
    fn backward_input(self, gy: &Tensor, w: &[f64], gx: &mut Tensor) {
        match self {
            AffineKind::Conv { input, output, kernel } => {
                let l = gx.len;
                let pad = kernel / 2;
                for n in 0..gy.rows {
                    for o in 0..output {
                        let go = &gy.data[(n * output + o) * l..(n * output + o + 1) * l];
                        for i in 0..input {
                            let gxi = &mut gx.data[(n * input + i) * l..(n * input + i + 1) * l];
                            for j in 0..kernel {
                                let wv = w[(o * input + i) * kernel + j];
                                let (t0, t1, s0) = shift_range(l, j, pad);
                                for (gv, g) in gxi[s0..s0 + (t1 - t0)].iter_mut().zip(&go[t0..t1]) {
                                    *gv += wv * g;
                                }
                            }
                        }
                    }
                }
            }
            AffineKind::Dense { input, output } => {
                for n in 0..gy.rows {
                    let gxr = &mut gx.data[n * input..(n + 1) * input];
                    for o in 0..output {
                        let g = gy.data[n * output + o];
                        for (gv, wv) in gxr.iter_mut().zip(&w[o * input..(o + 1) * input]) {
                            *gv += g * wv;
                        }
                    }
                }
            }
        }
    }

    fn output_shape(self, x: &Tensor) -> (usize, usize) {
        match self {
            AffineKind::Conv { output, .. } => (output, x.len),
            AffineKind::Dense { output, .. } => (output, 1),
        }
    }
}

/// Output positions `t0..t1` read input positions `s0..` for kernel tap `j`.
fn shift_range(l: usize, j: usize, pad: usize) -> (usize, usize, usize) {
    if j < pad {
        let s = pad - j;
        (s.min(l), l, 0)
    } else {
        let s = j - pad;
        (0, l.saturating_sub(s), s.min(l))
    }
}

/// Mean-field Gaussian parameters, σ = softplus(ρ).
#[derive(Clone, Debug, PartialEq)]
pub struct Variational {
    pub weight_rho: Param,
    pub bias_rho: Param,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub kind: AffineKind,
    /// Weight values, or means for a Gaussian layer.
    pub weight: Param,
    pub bias: Param,
    pub variational: Option<Variational>,
}

pub struct AffineCache {
    x: Tensor,
    /// Standard normal draws and the activation standard deviation.
    noise: Option<(Tensor, Tensor)>,
}

impl Affine {
    pub fn new(kind: AffineKind, bayesian: bool, init_sigma: f64, rng: &mut impl Rng) -> Self {
        let scale = (2.0 / kind.fan_in() as f64).sqrt();
        let weight = (0..kind.weight_count()).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let outputs = kind.outputs();
        let variational = bayesian.then(|| Variational {
            weight_rho: Param::new(vec![softplus_inv(init_sigma); kind.weight_count()]),
            bias_rho: Param::new(vec![softplus_inv(init_sigma); outputs]),
        });
        Self {
            kind,
            weight: Param::new(weight),
            bias: Param::new(vec![0.0; outputs]),
            variational,
        }
    }

    pub fn is_bayesian(&self) -> bool {
        self.variational.is_some()
    }

    pub fn forward(&self, x: &Tensor, rng: &mut impl Rng) -> (Tensor, AffineCache) {
        let mean = self.kind.forward(x, &self.weight.value, &self.bias.value);
        let Some(v) = &self.variational else {
            return (mean, AffineCache { x: x.clone(), noise: None });
        };
        let w_var: Vec<f64> = v.weight_rho.value.iter().map(|&r| softplus(r).powi(2)).collect();
        let b_var: Vec<f64> = v.bias_rho.value.iter().map(|&r| softplus(r).powi(2)).collect();
        let var = self.kind.forward(&x.map(|a| a * a), &w_var, &b_var);
        let std = var.map(f64::sqrt);
        let mut eps = mean.same_shape();
        eps.data.iter_mut().for_each(|e| *e = rng.sample(StandardNormal));
        let mut out = mean;
        for ((o, s), e) in out.data.iter_mut().zip(&std.data).zip(&eps.data) {
            *o += s * e;
        }
        (out, AffineCache { x: x.clone(), noise: Some((eps, std)) })
    }

    /// Accumulates parameter gradients and returns dL/dx, or an empty
    /// tensor when `input_grad` is false (the first layer needs none).
    pub fn backward(&mut self, cache: &AffineCache, gy: &Tensor, input_grad: bool) -> Tensor {
        let x = &cache.x;
        let mut gx = if input_grad { x.same_shape() } else { Tensor::zeros(0, x.channels, x.len) };
        self.kind.backward_params(x, gy, &mut self.weight.grad, &mut self.bias.grad);
        if input_grad {
            self.kind.backward_input(gy, &self.weight.value, &mut gx);
        }
        if let (Some(v), Some((eps, std))) = (&mut self.variational, &cache.noise) {
            // d out / d var = ε / (2·std)
            let mut gvar = gy.clone();
            for ((g, e), s) in gvar.data.iter_mut().zip(&eps.data).zip(&std.data) {
                *g *= e / (2.0 * s);
            }
            let x2 = x.map(|a| a * a);
            let mut g_wvar = vec![0.0; v.weight_rho.len()];
            let mut g_bvar = vec![0.0; v.bias_rho.len()];
            self.kind.backward_params(&x2, &gvar, &mut g_wvar, &mut g_bvar);
            chain_variance_to_rho(&mut v.weight_rho, &g_wvar);
            chain_variance_to_rho(&mut v.bias_rho, &g_bvar);
            if !input_grad {
                return gx;
            }
            let w_var: Vec<f64> = v.weight_rho.value.iter().map(|&r| softplus(r).powi(2)).collect();
            let mut gx2 = x.same_shape();
            self.kind.backward_input(&gvar, &w_var, &mut gx2);
            for ((g, g2), xv) in gx.data.iter_mut().zip(&gx2.data).zip(&x.data) {
                *g += 2.0 * xv * g2;
            }
        }
        gx
    }

    /// KL divergence of all Gaussian parameters from the prior; 0 for a
    /// deterministic layer.
    pub fn kl(&self, prior_sigma: f64) -> f64 {
        let Some(v) = &self.variational else { return 0.0 };
        let pairs = self.weight.value.iter().zip(&v.weight_rho.value).chain(self.bias.value.iter().zip(&v.bias_rho.value));
        pairs.map(|(&mu, &rho)| gaussian_kl(mu, softplus(rho), prior_sigma)).sum()
    }

    /// Adds `scale · dKL/dθ` to the gradients.
    pub fn backward_kl(&mut self, prior_sigma: f64, scale: f64) {
        let Some(v) = &mut self.variational else { return };
        let p2 = prior_sigma * prior_sigma;
        for (mu, rho) in [(&mut self.weight, &mut v.weight_rho), (&mut self.bias, &mut v.bias_rho)] {
            for i in 0..mu.len() {
                let s = softplus(rho.value[i]);
                mu.grad[i] += scale * mu.value[i] / p2;
                rho.grad[i] += scale * (-1.0 / s + s / p2) * sigmoid(rho.value[i]);
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = vec![&mut self.weight, &mut self.bias];
        if let Some(v) = &mut self.variational {
            out.push(&mut v.weight_rho);
            out.push(&mut v.bias_rho);
        }
        out
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = vec![&self.weight, &self.bias];
        if let Some(v) = &self.variational {
            out.push(&v.weight_rho);
            out.push(&v.bias_rho);
        }
        out
    }

    pub fn output_shape(&self, x: &Tensor) -> (usize, usize) {
        self.kind.output_shape(x)
    }
}

/// dL/dvariance → dL/dρ through σ² = softplus(ρ)².
fn chain_variance_to_rho(rho: &mut Param, g_var: &[f64]) {
    for i in 0..rho.len() {
        let r = rho.value[i];
        rho.grad[i] += g_var[i] * 2.0 * softplus(r) * sigmoid(r);
    }
}

/// Batch normalization over rows and positions, per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

pub struct BatchNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
    /// Batch mean and unbiased variance, for the running averages.
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(vec![1.0; channels]),
            beta: Param::new(vec![0.0; channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn forward(&self, x: &Tensor, training: bool) -> (Tensor, BatchNormCache) {
        let (c, l) = (x.channels, x.len);
        let m = (x.rows * l) as f64;
        let (mean, var, batch_stats) = if training {
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for n in 0..x.rows {
                for ch in 0..c {
                    mean[ch] += x.data[(n * c + ch) * l..(n * c + ch + 1) * l].iter().sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|v| *v /= m);
            for n in 0..x.rows {
                for ch in 0..c {
                    var[ch] += x.data[(n * c + ch) * l..(n * c + ch + 1) * l].iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= m);
            let unbiased = var.iter().map(|v| v * m / (m - 1.0).max(1.0)).collect();
            (mean.clone(), var, Some((mean, unbiased)))
        } else {
            (self.running_mean.clone(), self.running_var.clone(), None)
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = x.clone();
        let mut y = x.clone();
        for n in 0..x.rows {
            for ch in 0..c {
                let range = (n * c + ch) * l..(n * c + ch + 1) * l;
                for (h, yv) in xhat.data[range.clone()].iter_mut().zip(&mut y.data[range]) {
                    *h = (*h - mean[ch]) * inv_std[ch];
                    *yv = self.gamma.value[ch] * *h + self.beta.value[ch];
                }
            }
        }
        (y, BatchNormCache { xhat, inv_std, batch_stats })
    }

    pub fn update_running(&mut self, cache: &BatchNormCache) {
        if let Some((mean, var)) = &cache.batch_stats {
            for ch in 0..mean.len() {
                self.running_mean[ch] = (1.0 - self.momentum) * self.running_mean[ch] + self.momentum * mean[ch];
                self.running_var[ch] = (1.0 - self.momentum) * self.running_var[ch] + self.momentum * var[ch];
            }
        }
    }

    pub fn backward(&mut self, cache: &BatchNormCache, gy: &Tensor) -> Tensor {
        let (c, l) = (gy.channels, gy.len);
        let m = (gy.rows * l) as f64;
        let mut sum_g = vec![0.0; c];
        let mut sum_gx = vec![0.0; c];
        for n in 0..gy.rows {
            for ch in 0..c {
                let range = (n * c + ch) * l..(n * c + ch + 1) * l;
                for (g, h) in gy.data[range.clone()].iter().zip(&cache.xhat.data[range]) {
                    sum_g[ch] += g;
                    sum_gx[ch] += g * h;
                }
            }
        }
        for ch in 0..c {
            self.beta.grad[ch] += sum_g[ch];
            self.gamma.grad[ch] += sum_gx[ch];
        }
        let mut gx = gy.clone();
        let training = cache.batch_stats.is_some();
        for n in 0..gy.rows {
            for ch in 0..c {
                let g = self.gamma.value[ch];
                let range = (n * c + ch) * l..(n * c + ch + 1) * l;
                for (gv, h) in gx.data[range.clone()].iter_mut().zip(&cache.xhat.data[range]) {
                    *gv = if training {
                        g * cache.inv_std[ch] * (*gv - sum_g[ch] / m - h * sum_gx[ch] / m)
                    } else {
                        g * cache.inv_std[ch] * *gv
                    };
                }
            }
        }
        gx
    }
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

pub fn leaky_relu_backward(x: &Tensor, gy: &Tensor, slope: f64) -> Tensor {
    let mut g = gy.clone();
    for (gv, &xv) in g.data.iter_mut().zip(&x.data) {
        if xv <= 0.0 {
            *gv *= slope;
        }
    }
    g
}

/// Non-overlapping max pooling along positions; a trailing remainder is
/// dropped. Returns the output and the flat index of every chosen input.
pub fn max_pool(x: &Tensor, size: usize) -> (Tensor, Vec<usize>) {
    let out_len = x.len / size;
    let mut y = Tensor::zeros(x.rows, x.channels, out_len);
    let mut idx = vec![0; y.data.len()];
    for rc in 0..x.rows * x.channels {
        for t in 0..out_len {
            let base = rc * x.len + t * size;
            let mut best = base;
            for i in base + 1..base + size {
                if x.data[i] > x.data[best] {
                    best = i;
                }
            }
            y.data[rc * out_len + t] = x.data[best];
            idx[rc * out_len + t] = best;
        }
    }
    (y, idx)
}

pub fn max_pool_backward(input_shape: (usize, usize, usize), idx: &[usize], gy: &Tensor) -> Tensor {
    let (rows, channels, len) = input_shape;
    let mut gx = Tensor::zeros(rows, channels, len);
    for (g, &i) in gy.data.iter().zip(idx) {
        gx.data[i] += g;
    }
    gx
}
