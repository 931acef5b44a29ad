//! Tap-candidate detection in wrist accelerometer streams.
//!
//! Each hand carries two 3-axis sensors. The detector tracks an
//! exponentially decayed sum of per-sensor changes in acceleration
//! magnitude and, when it exceeds a threshold, places the tap at the
//! score maximum within a short back-off period.

pub mod io;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::domain::Hand;
use crate::error::{Error, Result};

pub const SENSORS: usize = 2;
pub const AXES: usize = 3;
/// Channel order: sensor0 x, y, z, sensor1 x, y, z.
pub const CHANNELS: usize = SENSORS * AXES;

/// One time step of both sensors.
pub type Frame = [f64; CHANNELS];

#[derive(Clone, Debug, PartialEq)]
pub struct ImuStream {
    sample_rate: u32,
    samples: Vec<Frame>,
}

impl ImuStream {
    pub const DEFAULT_SAMPLE_RATE: u32 = 1600;

    pub fn new(sample_rate: u32, samples: Vec<Frame>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        Ok(Self { sample_rate, samples })
    }

    pub fn zeros(sample_rate: u32, len: usize) -> Result<Self> {
        Self::new(sample_rate, vec![[0.0; CHANNELS]; len])
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn samples(&self) -> &[Frame] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Frame] {
        &mut self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Stream with every sample multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            sample_rate: self.sample_rate,
            samples: self.samples.iter().map(|f| f.map(|v| v * factor)).collect(),
        }
    }

    /// Samples corresponding to `ms` milliseconds.
    pub fn samples_for_ms(&self, ms: f64) -> usize {
        (ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    /// `len` frames centred on `center` (from `center - len/2`), with zeros
    /// outside the stream.
    pub fn window(&self, center: usize, len: usize) -> Vec<Frame> {
        let start = center as isize - (len / 2) as isize;
        (0..len as isize)
            .map(|i| {
                let t = start + i;
                if t >= 0 && (t as usize) < self.samples.len() {
                    self.samples[t as usize]
                } else {
                    [0.0; CHANNELS]
                }
            })
            .collect()
    }
}

/// Euclidean norm of one sensor's three axes.
pub fn sensor_magnitude(frame: &Frame, sensor: usize) -> f64 {
    let s = &frame[sensor * AXES..(sensor + 1) * AXES];
    (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Divisor applied to the previous score at every step.
    pub decay: f64,
    pub activation_threshold: f64,
    /// Back-off period in samples.
    pub backoff: usize,
    pub window_len: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            decay: 1.6,
            activation_threshold: 17.0,
            backoff: 64,
            window_len: 128,
        }
    }
}

impl DetectorConfig {
    /// The lower threshold used while collecting data.
    pub const SENSITIVE_THRESHOLD: f64 = 10.0;

    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 1.0) {
            return Err(Error::Config(format!("decay must exceed 1, got {}", self.decay)));
        }
        if self.backoff < 1 {
            return Err(Error::Config("backoff must be at least one sample".into()));
        }
        if self.window_len == 0 || self.window_len % 2 != 0 {
            return Err(Error::Config(format!("window length must be even and positive, got {}", self.window_len)));
        }
        if !self.activation_threshold.is_finite() {
            return Err(Error::Config("activation threshold must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TapCandidate {
    pub t_z: usize,
    pub hand: Hand,
    pub window: Vec<Frame>,
    pub peak_score: f64,
}

/// Running rate-of-change score, one value per sample, starting from 0.
pub fn rate_of_change(stream: &ImuStream, config: &DetectorConfig) -> Result<Vec<f64>> {
    config.validate()?;
    if stream.is_empty() {
        return Err(Error::Empty("accelerometer stream"));
    }
    let samples = stream.samples();
    let mut scores = Vec::with_capacity(samples.len());
    scores.push(0.0);
    let mut prev = [sensor_magnitude(&samples[0], 0), sensor_magnitude(&samples[0], 1)];
    let mut r = 0.0;
    for frame in &samples[1..] {
        let cur = [sensor_magnitude(frame, 0), sensor_magnitude(frame, 1)];
        r = r / config.decay + (cur[0] - prev[0]).abs() + (cur[1] - prev[1]).abs();
        scores.push(r);
        prev = cur;
    }
    Ok(scores)
}

/// Tap times found in a score series.
///
/// Scanning forward, the first sample at or above the threshold is the
/// detection time `t_d`; the tap is placed at the score maximum in
/// `[t_d, t_d + backoff]` (earliest on ties). Scanning resumes at
/// `t_d + 2·backoff`, which keeps successive taps at least `backoff`
/// samples apart and makes the number of detections non-increasing in the
/// threshold.
pub fn find_peaks(scores: &[f64], config: &DetectorConfig) -> Vec<usize> {
    let mut peaks = Vec::new();
    let mut t = 0;
    while t < scores.len() {
        if scores[t] < config.activation_threshold {
            t += 1;
            continue;
        }
        let end = (t + config.backoff).min(scores.len() - 1);
        let mut best = t;
        for i in t..=end {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        peaks.push(best);
        t += 2 * config.backoff;
    }
    peaks
}

pub fn detect_taps(stream: &ImuStream, hand: Hand, config: &DetectorConfig) -> Result<Vec<TapCandidate>> {
    let scores = rate_of_change(stream, config)?;
    Ok(find_peaks(&scores, config)
        .into_iter()
        .map(|t_z| TapCandidate {
            t_z,
            hand,
            window: stream.window(t_z, config.window_len),
            peak_score: scores[t_z],
        })
        .collect())
}
