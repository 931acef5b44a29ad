//! Sequential network built from a layer specification, with the
//! variational training objective.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    leaky_relu, leaky_relu_backward, max_pool, max_pool_backward, Affine, AffineCache, AffineKind, BatchNorm, BatchNormCache, Param, Tensor,
};
use crate::domain::FingerClass;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Length-3 convolution with `out` channels.
    Conv { out: usize, bayesian: bool },
    Dense { out: usize, bayesian: bool },
    BatchNorm,
    LeakyRelu,
    MaxPool { size: usize },
    Flatten,
}

pub const KERNEL: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Affine(Affine),
    BatchNorm(BatchNorm),
    LeakyRelu(f64),
    MaxPool(usize),
    Flatten,
}

enum Cache {
    Affine(AffineCache),
    BatchNorm(BatchNormCache),
    LeakyRelu(Tensor),
    MaxPool((usize, usize, usize), Vec<usize>),
    Flatten((usize, usize)),
}

/// Activations kept from a forward pass for the backward pass.
pub struct Trace(Vec<Cache>);

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub input_channels: usize,
    pub input_len: usize,
}

impl Network {
    pub fn build(
        specs: &[LayerSpec],
        input_channels: usize,
        input_len: usize,
        init_sigma: f64,
        leaky_slope: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let (mut c, mut l) = (input_channels, input_len);
        let mut flat = false;
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let layer = match *spec {
                LayerSpec::Conv { out, bayesian } => {
                    if flat {
                        return Err(Error::Config(format!("layer {i}: convolution after flatten")));
                    }
                    let kind = AffineKind::Conv { input: c, output: out, kernel: KERNEL };
                    c = out;
                    Layer::Affine(Affine::new(kind, bayesian, init_sigma, rng))
                }
                LayerSpec::Dense { out, bayesian } => {
                    if !flat {
                        return Err(Error::Config(format!("layer {i}: dense layer before flatten")));
                    }
                    let kind = AffineKind::Dense { input: c, output: out };
                    c = out;
                    Layer::Affine(Affine::new(kind, bayesian, init_sigma, rng))
                }
                LayerSpec::BatchNorm => Layer::BatchNorm(BatchNorm::new(c)),
                LayerSpec::LeakyRelu => Layer::LeakyRelu(leaky_slope),
                LayerSpec::MaxPool { size } => {
                    if flat || size == 0 || l / size == 0 {
                        return Err(Error::Config(format!("layer {i}: cannot pool length {l} by {size}")));
                    }
                    l /= size;
                    Layer::MaxPool(size)
                }
                LayerSpec::Flatten => {
                    c *= l;
                    l = 1;
                    flat = true;
                    Layer::Flatten
                }
            };
            layers.push(layer);
        }
        if !flat || c != FingerClass::COUNT {
            return Err(Error::Config(format!("network must end in a dense layer with {} outputs", FingerClass::COUNT)));
        }
        Ok(Self {
            layers,
            input_channels,
            input_len,
        })
    }

    pub fn has_bayesian_layer(&self) -> bool {
        self.affine_layers().any(Affine::is_bayesian)
    }

    pub fn affine_layers(&self) -> impl Iterator<Item = &Affine> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Affine(a) => Some(a),
            _ => None,
        })
    }

    /// Logits for each row. In training mode batch normalization uses
    /// batch statistics; otherwise its running averages.
    pub fn forward(&self, x: &Tensor, training: bool, rng: &mut impl Rng) -> Result<(Tensor, Trace)> {
        if x.channels != self.input_channels || x.len != self.input_len {
            return Err(Error::Shape {
                expected: format!("{} channels x {} samples", self.input_channels, self.input_len),
                actual: format!("{} channels x {} samples", x.channels, x.len),
            });
        }
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let (out, cache) = match layer {
                Layer::Affine(a) => {
                    let (o, c) = a.forward(&h, rng);
                    (o, Cache::Affine(c))
                }
                Layer::BatchNorm(bn) => {
                    let (o, c) = bn.forward(&h, training);
                    (o, Cache::BatchNorm(c))
                }
                Layer::LeakyRelu(slope) => (leaky_relu(&h, *slope), Cache::LeakyRelu(h)),
                Layer::MaxPool(size) => {
                    let shape = (h.rows, h.channels, h.len);
                    let (o, idx) = max_pool(&h, *size);
                    (o, Cache::MaxPool(shape, idx))
                }
                Layer::Flatten => {
                    let shape = (h.channels, h.len);
                    let features = h.channels * h.len;
                    (Tensor::from_data(h.rows, features, 1, h.data), Cache::Flatten(shape))
                }
            };
            if out.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: i });
            }
            caches.push(cache);
            h = out;
        }
        Ok((h, Trace(caches)))
    }

    /// Folds batch statistics from a training pass into the running averages.
    pub fn update_running_stats(&mut self, trace: &Trace) {
        for (layer, cache) in self.layers.iter_mut().zip(&trace.0) {
            if let (Layer::BatchNorm(bn), Cache::BatchNorm(c)) = (layer, cache) {
                bn.update_running(c);
            }
        }
    }

    /// Accumulates parameter gradients for upstream gradient `grad` on the logits.
    pub fn backward(&mut self, trace: &Trace, grad: Tensor) {
        let mut g = grad;
        for (i, (layer, cache)) in self.layers.iter_mut().zip(&trace.0).enumerate().rev() {
            g = match (layer, cache) {
                (Layer::Affine(a), Cache::Affine(c)) => a.backward(c, &g, i > 0),
                (Layer::BatchNorm(bn), Cache::BatchNorm(c)) => bn.backward(c, &g),
                (Layer::LeakyRelu(slope), Cache::LeakyRelu(x)) => leaky_relu_backward(x, &g, *slope),
                (Layer::MaxPool(_), Cache::MaxPool(shape, idx)) => max_pool_backward(*shape, idx, &g),
                (Layer::Flatten, Cache::Flatten((c, l))) => Tensor::from_data(g.rows, *c, *l, g.data),
                _ => unreachable!("trace does not match layers"),
            };
        }
    }

    pub fn kl(&self, prior_sigma: f64) -> f64 {
        self.affine_layers().map(|a| a.kl(prior_sigma)).sum()
    }

    pub fn backward_kl(&mut self, prior_sigma: f64, scale: f64) {
        for layer in &mut self.layers {
            if let Layer::Affine(a) = layer {
                a.backward_kl(prior_sigma, scale);
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Affine(a) => out.extend(a.params_mut()),
                Layer::BatchNorm(bn) => {
                    out.push(&mut bn.gamma);
                    out.push(&mut bn.beta);
                }
                _ => {}
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Affine(a) => out.extend(a.params()),
                Layer::BatchNorm(bn) => {
                    out.push(&bn.gamma);
                    out.push(&bn.beta);
                }
                _ => {}
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

/// Row-wise softmax of `rows × 6` logits.
pub fn softmax(logits: &Tensor) -> Vec<[f64; FingerClass::COUNT]> {
    (0..logits.rows)
        .map(|r| {
            let row = logits.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut p = [0.0; FingerClass::COUNT];
            let mut z = 0.0;
            for (pv, &l) in p.iter_mut().zip(row) {
                *pv = (l - max).exp();
                z += *pv;
            }
            p.iter_mut().for_each(|v| *v /= z);
            p
        })
        .collect()
}

/// Row-wise log-softmax.
pub fn log_softmax(logits: &Tensor) -> Vec<[f64; FingerClass::COUNT]> {
    (0..logits.rows)
        .map(|r| {
            let row = logits.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
            std::array::from_fn(|i| row[i] - lse)
        })
        .collect()
}

/// Entropic open-set loss of one row: `-log p_y` for a finger sample and
/// the mean of `-log p_f` over all classes for an out-of-distribution one.
pub fn open_set_loss(log_probs: &[f64; FingerClass::COUNT], label: Option<FingerClass>) -> f64 {
    match label {
        Some(c) => -log_probs[c.index()],
        None => -log_probs.iter().sum::<f64>() / FingerClass::COUNT as f64,
    }
}

/// Mean open-set loss over rows and its gradient with respect to the logits.
pub fn open_set_loss_and_grad(logits: &Tensor, labels: &[Option<FingerClass>]) -> (f64, Tensor) {
    let logp = log_softmax(logits);
    let n = logits.rows as f64;
    let mut grad = Tensor::zeros(logits.rows, logits.channels, 1);
    let mut total = 0.0;
    for (r, (lp, &label)) in logp.iter().zip(labels).enumerate() {
        total += open_set_loss(lp, label);
        for k in 0..FingerClass::COUNT {
            let target = match label {
                Some(c) => (c.index() == k) as u8 as f64,
                None => 1.0 / FingerClass::COUNT as f64,
            };
            grad.data[r * FingerClass::COUNT + k] = (lp[k].exp() - target) / n;
        }
    }
    (total / n, grad)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub kl: f64,
    pub data: f64,
}

/// Result of [`elbo_loss`]: the loss, the forward activations and the logits.
pub struct LossEval {
    pub parts: LossParts,
    pub trace: Trace,
    pub logits: Tensor,
}

/// `kl_weight · KL + mean open-set loss`, with gradients accumulated into
/// the network when `backward` is set.
pub fn elbo_loss(
    net: &mut Network,
    x: &Tensor,
    labels: &[Option<FingerClass>],
    prior_sigma: f64,
    kl_weight: f64,
    backward: bool,
    rng: &mut impl Rng,
) -> Result<LossEval> {
    if x.rows == 0 || x.rows != labels.len() {
        return Err(Error::Empty("loss batch"));
    }
    let (logits, trace) = net.forward(x, true, rng)?;
    let (data, grad) = open_set_loss_and_grad(&logits, labels);
    let kl = net.kl(prior_sigma);
    let total = kl_weight * kl + data;
    if !total.is_finite() {
        // the forward pass was finite, so the loss head is at fault
        return Err(Error::NonFinite { layer: net.layers.len() });
    }
    if backward {
        net.backward(&trace, grad);
        net.backward_kl(prior_sigma, kl_weight);
    }
    Ok(LossEval {
        parts: LossParts { total, kl, data },
        trace,
        logits,
    })
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Param>) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                let g = p.grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                p.value[i] -= self.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}
