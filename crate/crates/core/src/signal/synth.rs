//! Synthetic wrist accelerometer streams.
//!
//! Every tap is a damped sinusoid burst whose frequency, decay, direction
//! and sensor amplitude ratio depend on the finger class. Middle and ring
//! taps are deliberately close. Between taps the generator can insert
//! out-of-distribution motion: slow swells and low-frequency mid-air
//! movement. A white noise floor sits on top of a constant gravity vector.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::io::Label;
use super::{Frame, ImuStream, AXES, CHANNELS};
use crate::domain::{FingerClass, Hand};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurstTemplate {
    pub frequency_hz: f64,
    pub attack_ms: f64,
    pub decay_ms: f64,
    /// Peak amplitude on sensor 0.
    pub amplitude: f64,
    /// Sensor 1 amplitude relative to sensor 0.
    pub sensor_ratio: f64,
    /// Phase lag of sensor 1 in radians.
    pub phase_lag: f64,
    /// Direction of the vibration (normalized when rendered).
    pub direction: [f64; 3],
}

impl BurstTemplate {
    const fn new(frequency_hz: f64, decay_ms: f64, amplitude: f64, sensor_ratio: f64, phase_lag: f64, direction: [f64; 3]) -> Self {
        Self {
            frequency_hz,
            attack_ms: 1.5,
            decay_ms,
            amplitude,
            sensor_ratio,
            phase_lag,
            direction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodTemplate {
    /// Frequency range of slow swells and mid-air motion.
    pub frequency_hz: (f64, f64),
    pub amplitude: f64,
    pub duration_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    pub sample_rate: u32,
    /// Constant acceleration seen by both sensors at rest.
    pub gravity: [f64; 3],
    pub noise_std: f64,
    /// Burst templates indexed by [`FingerClass::index`].
    pub templates: [BurstTemplate; FingerClass::COUNT],
    /// Relative standard deviation of per-tap amplitude.
    pub amplitude_jitter: f64,
    /// Relative standard deviation of per-tap frequency and decay.
    pub frequency_jitter: f64,
    /// Standard deviation added to each direction component per tap.
    pub direction_jitter: f64,
    /// Gap between consecutive taps, drawn uniformly.
    pub gap_ms: (f64, f64),
    /// Probability that a gap holds an out-of-distribution segment.
    pub ood_rate: f64,
    pub ood: OodTemplate,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            sample_rate: ImuStream::DEFAULT_SAMPLE_RATE,
            gravity: [0.0, 0.0, 10.0],
            noise_std: 0.3,
            templates: [
                // thumb
                BurstTemplate::new(90.0, 20.0, 36.0, 0.5, 0.6, [0.2, 0.6, 0.75]),
                // index
                BurstTemplate::new(130.0, 13.0, 34.0, 1.2, 0.2, [0.75, 0.2, 0.65]),
                // middle
                BurstTemplate::new(175.0, 11.0, 32.0, 0.85, 0.9, [0.3, 0.3, 0.9]),
                // ring
                BurstTemplate::new(190.0, 10.0, 30.0, 0.7, 1.1, [0.4, 0.25, 0.88]),
                // pinky
                BurstTemplate::new(240.0, 8.0, 32.0, 0.5, 1.6, [0.55, 0.5, 0.65]),
                // palm
                BurstTemplate::new(50.0, 30.0, 50.0, 1.0, 0.0, [0.05, 0.1, 1.0]),
            ],
            amplitude_jitter: 0.15,
            frequency_jitter: 0.06,
            direction_jitter: 0.08,
            gap_ms: (350.0, 700.0),
            ood_rate: 0.3,
            ood: OodTemplate {
                frequency_hz: (0.5, 12.0),
                amplitude: 6.0,
                duration_ms: 250.0,
            },
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if !(self.noise_std > 0.0) {
            return Err(Error::Config(format!("noise_std must be positive, got {}", self.noise_std)));
        }
        for (i, t) in self.templates.iter().enumerate() {
            let name = FingerClass::ALL[i];
            if t.amplitude < 0.0 || t.sensor_ratio < 0.0 {
                return Err(Error::Config(format!("{name} template has a negative amplitude")));
            }
            if !(t.frequency_hz > 0.0 && t.decay_ms > 0.0 && t.attack_ms > 0.0) {
                return Err(Error::Config(format!("{name} template needs positive frequency, attack and decay")));
            }
            if t.direction.iter().all(|&d| d == 0.0) {
                return Err(Error::Config(format!("{name} template has a zero direction")));
            }
        }
        if self.ood.amplitude < 0.0 || !(self.ood.frequency_hz.0 > 0.0 && self.ood.frequency_hz.0 <= self.ood.frequency_hz.1) {
            return Err(Error::Config("invalid out-of-distribution template".into()));
        }
        if [self.amplitude_jitter, self.frequency_jitter, self.direction_jitter].iter().any(|&j| j < 0.0) {
            return Err(Error::Config("jitter must be non-negative".into()));
        }
        if !(self.gap_ms.0 > 0.0 && self.gap_ms.0 <= self.gap_ms.1) {
            return Err(Error::Config("gap range must be positive and ordered".into()));
        }
        if !(0.0..=1.0).contains(&self.ood_rate) {
            return Err(Error::Config("ood_rate must be a probability".into()));
        }
        Ok(())
    }

    fn samples(&self, ms: f64) -> usize {
        (ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn template(&self, class: FingerClass) -> &BurstTemplate {
        &self.templates[class.index()]
    }

    /// The templates of one simulated person: every template's frequency,
    /// decay, amplitude and sensor ratio is scaled by `1 + N(0, spread)`
    /// and its direction shifted by `N(0, spread)` per component, fixed
    /// for all of that person's taps. `spread = 0` returns the spec as is.
    pub fn participant(&self, spread: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        for t in &mut out.templates {
            t.frequency_hz *= (1.0 + gauss(&mut rng, spread)).max(0.2);
            t.decay_ms *= (1.0 + gauss(&mut rng, spread)).max(0.2);
            t.amplitude *= (1.0 + gauss(&mut rng, spread)).max(0.0);
            t.sensor_ratio *= (1.0 + gauss(&mut rng, spread)).max(0.0);
            for d in &mut t.direction {
                *d += gauss(&mut rng, spread);
            }
        }
        out
    }
}

/// Event to inject: a tap of `class` peaking at sample `t`, or an
/// out-of-distribution segment centred on `t` when `class` is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub t: usize,
    pub class: Option<FingerClass>,
}

/// A draw from N(0, sd²); zero without consuming randomness when sd is 0.
fn gauss(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd > 0.0 {
        Normal::new(0.0, sd).expect("finite sd").sample(rng)
    } else {
        0.0
    }
}

/// Offset of the envelope maximum after onset, in samples.
fn peak_offset(attack: f64, decay: f64) -> f64 {
    attack * (1.0 + decay / attack).ln()
}

/// Noise floor plus gravity, `len` samples.
fn base_stream(spec: &GeneratorSpec, len: usize, rng: &mut ChaCha8Rng) -> Vec<Frame> {
    let noise = Normal::new(0.0, spec.noise_std).expect("validated noise");
    (0..len)
        .map(|_| {
            let mut f: Frame = [0.0; CHANNELS];
            for s in 0..2 {
                for a in 0..AXES {
                    f[s * AXES + a] = spec.gravity[a] + noise.sample(rng);
                }
            }
            f
        })
        .collect()
}

fn add_tap(spec: &GeneratorSpec, samples: &mut [Frame], peak: usize, class: FingerClass, rng: &mut ChaCha8Rng) {
    let t = spec.template(class);
    let sr = spec.sample_rate as f64;
    let freq = t.frequency_hz * (1.0 + gauss(rng, spec.frequency_jitter));
    let decay = t.decay_ms * (1.0 + gauss(rng, spec.frequency_jitter)) * sr / 1000.0;
    let attack = t.attack_ms * sr / 1000.0;
    let amp = (t.amplitude * (1.0 + gauss(rng, spec.amplitude_jitter))).max(0.0);
    let mut dir = t.direction.map(|d| d + gauss(rng, spec.direction_jitter));
    let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(1e-9);
    dir.iter_mut().for_each(|d| *d /= norm);
    let phase0: f64 = rng.gen_range(0.0..2.0 * PI);

    let offset = peak_offset(attack, decay);
    let env_max = (1.0 - (-offset / attack).exp()) * (-offset / decay).exp();
    let onset = peak as f64 - offset;
    let length = (offset + 8.0 * decay).ceil() as usize;
    let start = onset.ceil().max(0.0) as usize;
    for i in start..(start + length).min(samples.len()) {
        let tau = i as f64 - onset;
        let env = (1.0 - (-tau / attack).exp()) * (-tau / decay).exp() / env_max;
        for s in 0..2 {
            let a = amp * if s == 0 { 1.0 } else { t.sensor_ratio };
            let v = a * env * (2.0 * PI * freq * tau / sr + phase0 + s as f64 * t.phase_lag).sin();
            for (axis, d) in dir.iter().enumerate() {
                samples[i][s * AXES + axis] += v * d;
            }
        }
    }
}

fn add_ood(spec: &GeneratorSpec, samples: &mut [Frame], center: usize, rng: &mut ChaCha8Rng) {
    let sr = spec.sample_rate as f64;
    let (lo, hi) = spec.ood.frequency_hz;
    let freq = if hi > lo { rng.gen_range(lo..hi) } else { lo };
    let len = spec.samples(spec.ood.duration_ms);
    let amp = spec.ood.amplitude * rng.gen_range(0.5..1.0);
    let dir: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let phase: f64 = rng.gen_range(0.0..2.0 * PI);
    let start = center.saturating_sub(len / 2);
    for i in start..(start + len).min(samples.len()) {
        let tau = (i - start) as f64;
        // raised-cosine window keeps the segment smooth at both ends
        let w = 0.5 - 0.5 * (2.0 * PI * tau / len as f64).cos();
        let v = amp * w * (2.0 * PI * freq * tau / sr + phase).sin();
        for c in 0..CHANNELS {
            samples[i][c] += v * dir[c];
        }
    }
}

/// Negates the x axis of both sensors: the right hand is the mirror image
/// of the left.
pub fn mirror_frame(frame: &mut Frame) {
    frame[0] = -frame[0];
    frame[AXES] = -frame[AXES];
}

/// Renders `events` into a stream of `len` samples.
pub fn render(spec: &GeneratorSpec, hand: Hand, len: usize, events: &[Event], seed: u64) -> Result<(ImuStream, Vec<Label>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = base_stream(spec, len, &mut rng);
    let mut signal = vec![[0.0; CHANNELS]; len];
    for e in events {
        match e.class {
            Some(class) => add_tap(spec, &mut signal, e.t, class, &mut rng),
            None => add_ood(spec, &mut signal, e.t, &mut rng),
        }
    }
    for (out, mut sig) in samples.iter_mut().zip(signal) {
        if hand == Hand::Right {
            mirror_frame(&mut sig);
        }
        for c in 0..CHANNELS {
            out[c] += sig[c];
        }
    }
    let labels = events.iter().map(|e| Label { t: e.t, class: e.class, hand }).collect();
    Ok((ImuStream::new(spec.sample_rate, samples)?, labels))
}

/// Tap schedule with classes drawn uniformly, random gaps and optional
/// out-of-distribution segments between taps. Returns the events and the
/// stream length.
pub fn schedule(spec: &GeneratorSpec, classes: &[FingerClass], n_bursts: usize, rng: &mut impl Rng) -> (Vec<Event>, usize) {
    let lead = spec.samples(300.0);
    let mut events = Vec::with_capacity(n_bursts * 2);
    let mut t = lead;
    for i in 0..n_bursts {
        let class = classes[rng.gen_range(0..classes.len())];
        events.push(Event { t, class: Some(class) });
        if i + 1 == n_bursts {
            break;
        }
        let gap = spec.samples(rng.gen_range(spec.gap_ms.0..=spec.gap_ms.1));
        if rng.gen_bool(spec.ood_rate) {
            events.push(Event { t: t + gap / 2, class: None });
        }
        t += gap;
    }
    (events, t + lead)
}

/// A stream with `n_bursts` labelled taps of uniformly drawn classes.
pub fn synth_tap_stream(spec: &GeneratorSpec, hand: Hand, n_bursts: usize, seed: u64) -> Result<(ImuStream, Vec<Label>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a9_5eed);
    let (events, len) = schedule(spec, &FingerClass::ALL, n_bursts, &mut rng);
    render(spec, hand, len, &events, seed)
}

/// Noise floor with out-of-distribution motion but no taps.
pub fn synth_quiet_stream(spec: &GeneratorSpec, hand: Hand, seconds: f64, seed: u64) -> Result<(ImuStream, Vec<Label>)> {
    spec.validate()?;
    let len = spec.samples(seconds * 1000.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9_0e7);
    let mean_gap = spec.samples((spec.gap_ms.0 + spec.gap_ms.1) / 2.0).max(1);
    let mut events = Vec::new();
    let mut t = mean_gap / 2;
    while t < len {
        if rng.gen_bool(spec.ood_rate) {
            events.push(Event { t, class: None });
        }
        t += mean_gap;
    }
    render(spec, hand, len, &events, seed)
}
