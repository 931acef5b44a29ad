use std::io::{Read, Write};
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::LabeledWindow;
use super::layers::Tensor;
use super::network::{elbo_loss, softmax, Adam, Layer, LayerSpec, Network};
use super::preprocess::{channel_major, preprocess, ChannelStats};
use crate::domain::{FingerClass, Hand, TapObservation};
use crate::error::{Error, Result};
use crate::signal::{Frame, CHANNELS};

const MAGIC: &[u8; 4] = b"TTCK";
const VERSION: u32 = 1;

/// Which affine layers of the default architecture are Gaussian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Plain network.
    None,
    /// First convolution only.
    First,
    /// First convolution and the output layer.
    FirstAndLast,
    /// Every convolution and dense layer.
    All,
}

impl Placement {
    pub const ALL: [Placement; 4] = [Placement::None, Placement::First, Placement::FirstAndLast, Placement::All];

    pub fn name(self) -> &'static str {
        match self {
            Placement::None => "none",
            Placement::First => "first",
            Placement::FirstAndLast => "first_and_last",
            Placement::All => "all",
        }
    }
}

impl std::str::FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Placement::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown Bayesian placement {s:?}")))
    }
}

/// Blocks of two convolution–batch-norm–leaky-ReLU stages and a max-pool,
/// then a dense hidden layer and the six-way output. Gaussian layers go
/// where `placement` says.
pub fn architecture(channels: &[usize], pool: usize, hidden: usize, placement: Placement) -> Vec<LayerSpec> {
    let convs = channels.len() * 2;
    let bayes = |i: usize, last: usize| match placement {
        Placement::None => false,
        Placement::First => i == 0,
        Placement::FirstAndLast => i == 0 || i == last,
        Placement::All => true,
    };
    let last = convs + 1;
    let mut layers = Vec::new();
    let mut i = 0;
    for &c in channels {
        for _ in 0..2 {
            layers.push(LayerSpec::Conv { out: c, bayesian: bayes(i, last) });
            layers.push(LayerSpec::BatchNorm);
            layers.push(LayerSpec::LeakyRelu);
            i += 1;
        }
        layers.push(LayerSpec::MaxPool { size: pool });
    }
    layers.push(LayerSpec::Flatten);
    layers.push(LayerSpec::Dense { out: hidden, bayesian: bayes(i, last) });
    layers.push(LayerSpec::BatchNorm);
    layers.push(LayerSpec::LeakyRelu);
    layers.push(LayerSpec::Dense { out: FingerClass::COUNT, bayesian: bayes(i + 1, last) });
    layers
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub layers: Vec<LayerSpec>,
    /// Samples per input window.
    pub window_len: usize,
    /// Standard deviation of the zero-mean Gaussian prior on weights.
    pub prior_sigma: f64,
    /// Initial posterior standard deviation of Gaussian weights.
    pub init_sigma: f64,
    /// Weight samples per training window.
    pub ensemble_train: usize,
    /// Stochastic passes averaged at inference.
    pub ensemble_infer: usize,
    /// Windows whose best class probability is below this are rejected.
    pub reject_threshold: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Multiplier of the KL term; `None` means one over the number of
    /// batches per epoch.
    pub kl_weight: Option<f64>,
    pub learning_rate: f64,
    /// Stop after this many optimizer steps even if epochs remain.
    pub max_iterations: Option<usize>,
    pub leaky_slope: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            layers: ClassifierConfig::compact(Placement::FirstAndLast),
            window_len: 128,
            prior_sigma: 0.1,
            init_sigma: 0.01,
            ensemble_train: 10,
            ensemble_infer: 128,
            reject_threshold: 0.3,
            epochs: 30,
            batch_size: 64,
            kl_weight: None,
            learning_rate: 2e-3,
            max_iterations: None,
            leaky_slope: 0.01,
        }
    }
}

impl ClassifierConfig {
    /// Two blocks sized for single-core training on 128-sample windows.
    pub fn compact(placement: Placement) -> Vec<LayerSpec> {
        architecture(&[8, 16], 4, 32, placement)
    }

    /// Five blocks of widening convolutions.
    pub fn deep(placement: Placement) -> Vec<LayerSpec> {
        architecture(&[32, 64, 128, 128, 256], 2, 256, placement)
    }

    pub fn with_placement(placement: Placement) -> Self {
        Self {
            layers: Self::compact(placement),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            (self.window_len, "window_len"),
            (self.ensemble_train, "ensemble_train"),
            (self.ensemble_infer, "ensemble_infer"),
            (self.batch_size, "batch_size"),
        ];
        for (v, name) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.prior_sigma > 0.0 && self.init_sigma > 0.0 && self.learning_rate > 0.0) {
            return Err(Error::Config("prior_sigma, init_sigma and learning_rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.reject_threshold) {
            return Err(Error::Config("reject_threshold must lie in [0, 1]".into()));
        }
        if self.kl_weight.is_some_and(|w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::Config("kl_weight must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub total: f64,
    pub kl: f64,
    pub data: f64,
    pub iterations: usize,
    /// Share of finger windows whose stochastic training pass was right.
    pub train_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingStats {
    pub epochs: Vec<EpochStats>,
    /// Channels that had zero variance in the training windows.
    pub degenerate_channels: Vec<usize>,
}

impl TrainingStats {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.epochs {
            w.serialize(e).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

pub fn read_training_stats(input: impl Read) -> Result<Vec<EpochStats>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(e.to_string()))
}

/// Classifier output for one window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    /// Ensemble-averaged class probabilities.
    pub probs: [f64; FingerClass::COUNT],
    /// Best class probability fell below the rejection threshold.
    pub rejected: bool,
}

impl Prediction {
    pub fn argmax(&self) -> FingerClass {
        let mut best = 0;
        for i in 1..FingerClass::COUNT {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        FingerClass::from_index(best).expect("six classes")
    }

    /// The accepted tap, or `None` when rejected.
    pub fn observation(&self, hand: Hand, timestamp: u64) -> Option<TapObservation> {
        (!self.rejected).then(|| TapObservation {
            hand,
            probs: self.probs,
            timestamp,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    config: ClassifierConfig,
    stats: ChannelStats,
    network: Network,
}

impl Classifier {
    /// An untrained classifier with freshly initialized weights.
    pub fn new(config: ClassifierConfig, stats: ChannelStats, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let network = Network::build(&config.layers, CHANNELS, config.window_len, config.init_sigma, config.leaky_slope, &mut rng)?;
        Ok(Self { config, stats, network })
    }

    /// Trains from scratch. Every finger class must be present; each class
    /// is undersampled to the size of the rarest one and out-of-distribution
    /// windows are capped at that size too.
    pub fn train(data: &[LabeledWindow], config: ClassifierConfig, seed: u64) -> Result<(Self, TrainingStats)> {
        config.validate()?;
        let balanced = balance(data, seed)?;
        let (stats, degenerate) = ChannelStats::fit(balanced.iter().map(|w| (w.window.as_slice(), w.hand)));
        let mut model = Self::new(config, stats, seed)?;
        let mut history = model.fit(&balanced, model.config.epochs, model.config.max_iterations, seed)?;
        history.degenerate_channels = degenerate;
        Ok((model, history))
    }

    /// Continues training an existing model on `data` (for example one
    /// user's taps) for at most `iterations` optimizer steps. Normalization
    /// statistics are kept.
    pub fn fine_tune(&mut self, data: &[LabeledWindow], epochs: usize, iterations: Option<usize>, seed: u64) -> Result<TrainingStats> {
        if data.is_empty() {
            return Err(Error::Empty("fine-tuning data"));
        }
        self.fit(data, epochs, iterations, seed)
    }

    fn fit(&mut self, data: &[LabeledWindow], epochs: usize, max_iterations: Option<usize>, seed: u64) -> Result<TrainingStats> {
        let len = self.config.window_len;
        for w in data {
            if w.window.len() != len {
                return Err(Error::Shape {
                    expected: format!("{len} samples"),
                    actual: format!("{} samples", w.window.len()),
                });
            }
        }
        let inputs: Vec<Vec<f64>> = data.iter().map(|w| channel_major(&preprocess(&w.window, w.hand, &self.stats))).collect();
        let replicas = if self.network.has_bayesian_layer() { self.config.ensemble_train } else { 1 };
        let batches = data.len().div_ceil(self.config.batch_size);
        let kl_weight = self.config.kl_weight.unwrap_or(1.0 / batches as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7a11);
        let mut adam = Adam::new(self.config.learning_rate);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut stats = TrainingStats::default();
        let mut iterations = 0;
        info!(
            "training on {} windows, {} batches per epoch, {} weight samples per window, {} parameters",
            data.len(),
            batches,
            replicas,
            self.network.parameter_count()
        );
        'epochs: for epoch in 1..=epochs {
            order.shuffle(&mut rng);
            let (mut loss, mut kl, mut data_loss) = (0.0, 0.0, 0.0);
            let (mut correct, mut fingers, mut steps) = (0usize, 0usize, 0usize);
            for chunk in order.chunks(self.config.batch_size) {
                if max_iterations.is_some_and(|m| iterations >= m) {
                    break;
                }
                let rows = chunk.len() * replicas;
                let mut x = Vec::with_capacity(rows * CHANNELS * len);
                let mut labels = Vec::with_capacity(rows);
                for &i in chunk {
                    for _ in 0..replicas {
                        x.extend_from_slice(&inputs[i]);
                        labels.push(data[i].label);
                    }
                }
                let x = Tensor::from_data(rows, CHANNELS, len, x);
                self.network.zero_grad();
                let eval = elbo_loss(&mut self.network, &x, &labels, self.config.prior_sigma, kl_weight, true, &mut rng)?;
                adam.step(self.network.params_mut());
                self.network.update_running_stats(&eval.trace);
                let parts = eval.parts;
                for (p, label) in softmax(&eval.logits).iter().zip(&labels) {
                    if let Some(c) = label {
                        fingers += 1;
                        correct += (argmax(p) == c.index()) as usize;
                    }
                }
                loss += parts.total;
                kl += parts.kl;
                data_loss += parts.data;
                steps += 1;
                iterations += 1;
            }
            if steps == 0 {
                break 'epochs;
            }
            let n = steps as f64;
            let e = EpochStats {
                epoch,
                iterations,
                total: loss / n,
                kl: kl / n,
                data: data_loss / n,
                train_accuracy: correct as f64 / fingers.max(1) as f64,
            };
            debug!("epoch {epoch}: loss {:.4} (kl {:.1}, data {:.4}), accuracy {:.3}", e.total, e.kl, e.data, e.train_accuracy);
            stats.epochs.push(e);
        }
        Ok(stats)
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn channel_stats(&self) -> &ChannelStats {
        &self.stats
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn is_bayesian(&self) -> bool {
        self.network.has_bayesian_layer()
    }

    pub fn set_reject_threshold(&mut self, threshold: f64) {
        self.config.reject_threshold = threshold;
    }

    /// Class probabilities of each of `passes` stochastic forward passes.
    /// A network without Gaussian layers always makes a single pass.
    pub fn member_probs(&self, window: &[Frame], hand: Hand, passes: usize, rng: &mut impl Rng) -> Result<Vec<[f64; FingerClass::COUNT]>> {
        self.batch_member_probs(&[(window, hand)], passes, rng).map(|mut v| v.remove(0))
    }

    fn batch_member_probs(&self, windows: &[(&[Frame], Hand)], passes: usize, rng: &mut impl Rng) -> Result<Vec<Vec<[f64; FingerClass::COUNT]>>> {
        let len = self.config.window_len;
        let passes = if self.is_bayesian() { passes.max(1) } else { 1 };
        let mut x = Vec::with_capacity(windows.len() * passes * CHANNELS * len);
        for (window, hand) in windows {
            if window.len() != len {
                return Err(Error::Shape {
                    expected: format!("{len} samples"),
                    actual: format!("{} samples", window.len()),
                });
            }
            let row = channel_major(&preprocess(window, *hand, &self.stats));
            for _ in 0..passes {
                x.extend_from_slice(&row);
            }
        }
        let x = Tensor::from_data(windows.len() * passes, CHANNELS, len, x);
        let (logits, _) = self.network.forward(&x, false, rng)?;
        let probs = softmax(&logits);
        Ok(probs.chunks(passes).map(<[_]>::to_vec).collect())
    }

    /// Ensemble-averaged prediction with the configured number of passes.
    pub fn predict(&self, window: &[Frame], hand: Hand, rng: &mut impl Rng) -> Result<Prediction> {
        self.predict_with(window, hand, self.config.ensemble_infer, rng)
    }

    pub fn predict_with(&self, window: &[Frame], hand: Hand, passes: usize, rng: &mut impl Rng) -> Result<Prediction> {
        Ok(self.average(&self.member_probs(window, hand, passes, rng)?))
    }

    /// Predictions for many windows, batched `batch` windows at a time.
    pub fn predict_many(&self, windows: &[(&[Frame], Hand)], passes: usize, rng: &mut impl Rng) -> Result<Vec<Prediction>> {
        let passes = if self.is_bayesian() { passes.max(1) } else { 1 };
        let batch = (512 / passes).max(1);
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(batch) {
            for members in self.batch_member_probs(chunk, passes, rng)? {
                out.push(self.average(&members));
            }
        }
        Ok(out)
    }

    fn average(&self, members: &[[f64; FingerClass::COUNT]]) -> Prediction {
        let mut probs = [0.0; FingerClass::COUNT];
        for m in members {
            for (p, v) in probs.iter_mut().zip(m) {
                *p += v / members.len() as f64;
            }
        }
        let max = probs.iter().cloned().fold(0.0, f64::max);
        Prediction {
            probs,
            rejected: max < self.config.reject_threshold,
        }
    }

    /// Writes the checkpoint: magic, format version, a JSON header with the
    /// configuration and channel statistics, then every tensor as a length
    /// followed by little-endian `f32` values.
    pub fn write(&self, mut out: impl Write) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            stats: self.stats.clone(),
        })?;
        out.write_all(&(header.len() as u32).to_le_bytes())?;
        out.write_all(&header)?;
        let tensors = tensors(&self.network);
        out.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for t in tensors {
            out.write_all(&(t.len() as u32).to_le_bytes())?;
            for v in t {
                out.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read(mut input: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a classifier checkpoint".into()));
        }
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut header = vec![0u8; read_u32(&mut input)? as usize];
        input.read_exact(&mut header)?;
        let header: Header = serde_json::from_slice(&header)?;
        let mut model = Self::new(header.config, header.stats, 0)?;
        let count = read_u32(&mut input)? as usize;
        let mut slots = tensors_mut(&mut model.network);
        if count != slots.len() {
            return Err(Error::Format(format!("checkpoint has {count} tensors, architecture needs {}", slots.len())));
        }
        for slot in slots.iter_mut() {
            let n = read_u32(&mut input)? as usize;
            if n != slot.len() {
                return Err(Error::Format(format!("tensor of {n} values where {} were expected", slot.len())));
            }
            let mut bytes = vec![0u8; 4 * n];
            input.read_exact(&mut bytes)?;
            for (v, b) in slot.iter_mut().zip(bytes.chunks_exact(4)) {
                *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ClassifierConfig,
    stats: ChannelStats,
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn tensors(net: &Network) -> Vec<&Vec<f64>> {
    let mut out = Vec::new();
    for layer in &net.layers {
        match layer {
            Layer::Affine(a) => out.extend(a.params().into_iter().map(|p| &p.value)),
            Layer::BatchNorm(bn) => out.extend([&bn.gamma.value, &bn.beta.value, &bn.running_mean, &bn.running_var]),
            _ => {}
        }
    }
    out
}

fn tensors_mut(net: &mut Network) -> Vec<&mut Vec<f64>> {
    let mut out = Vec::new();
    for layer in &mut net.layers {
        match layer {
            Layer::Affine(a) => out.extend(a.params_mut().into_iter().map(|p| &mut p.value)),
            Layer::BatchNorm(bn) => out.extend([&mut bn.gamma.value, &mut bn.beta.value, &mut bn.running_mean, &mut bn.running_var]),
            _ => {}
        }
    }
    out
}

fn argmax(p: &[f64; FingerClass::COUNT]) -> usize {
    let mut best = 0;
    for i in 1..p.len() {
        if p[i] > p[best] {
            best = i;
        }
    }
    best
}

/// Undersamples every finger class to the rarest one and caps the
/// out-of-distribution windows at the same size.
fn balance(data: &[LabeledWindow], seed: u64) -> Result<Vec<LabeledWindow>> {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); FingerClass::COUNT + 1];
    for (i, w) in data.iter().enumerate() {
        groups[w.label.map_or(FingerClass::COUNT, FingerClass::index)].push(i);
    }
    for c in FingerClass::ALL {
        if groups[c.index()].is_empty() {
            return Err(Error::MissingClass(c.name().to_owned()));
        }
    }
    let size = groups[..FingerClass::COUNT].iter().map(Vec::len).min().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for g in &mut groups {
        g.shuffle(&mut rng);
        keep.extend(g.iter().take(size).copied());
    }
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| data[i].clone()).collect())
}
