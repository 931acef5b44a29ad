//! Labelled windows for training and evaluation, cut from streams by the
//! tap detector and matched against ground-truth labels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{FingerClass, Hand};
use crate::error::Result;
use crate::signal::io::Label;
use crate::signal::synth::{render, schedule, GeneratorSpec};
use crate::signal::{detect_taps, DetectorConfig, Frame, ImuStream};

/// Tolerance between a detected tap and its label.
pub const MATCH_TOLERANCE_MS: f64 = 25.0;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledWindow {
    pub window: Vec<Frame>,
    /// `None` for out-of-distribution motion.
    pub label: Option<FingerClass>,
    pub hand: Hand,
}

/// Counts from cutting one or more streams.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CutSummary {
    pub matched: usize,
    /// Labelled taps with no detection within tolerance.
    pub missed: usize,
    /// Detections with no tap label within tolerance; kept as
    /// out-of-distribution windows.
    pub spurious: usize,
    /// Windows centred on labelled out-of-distribution segments.
    pub ood: usize,
}

impl std::ops::AddAssign for CutSummary {
    fn add_assign(&mut self, o: Self) {
        self.matched += o.matched;
        self.missed += o.missed;
        self.spurious += o.spurious;
        self.ood += o.ood;
    }
}

/// Runs the detector over `stream` and labels each detected window with
/// the nearest tap label within [`MATCH_TOLERANCE_MS`]. Unmatched
/// detections and labelled out-of-distribution segments become windows
/// without a class.
pub fn cut_windows(stream: &ImuStream, hand: Hand, labels: &[Label], detector: &DetectorConfig) -> Result<(Vec<LabeledWindow>, CutSummary)> {
    let tolerance = stream.samples_for_ms(MATCH_TOLERANCE_MS);
    let taps: Vec<&Label> = labels.iter().filter(|l| l.class.is_some()).collect();
    let mut used = vec![false; taps.len()];
    let mut out = Vec::new();
    let mut summary = CutSummary::default();
    for cand in detect_taps(stream, hand, detector)? {
        let nearest = taps
            .iter()
            .enumerate()
            .filter(|(i, l)| !used[*i] && l.t.abs_diff(cand.t_z) <= tolerance)
            .min_by_key(|(_, l)| l.t.abs_diff(cand.t_z))
            .map(|(i, _)| i);
        let label = match nearest {
            Some(i) => {
                used[i] = true;
                summary.matched += 1;
                taps[i].class
            }
            None => {
                summary.spurious += 1;
                None
            }
        };
        out.push(LabeledWindow {
            window: cand.window,
            label,
            hand,
        });
    }
    summary.missed = used.iter().filter(|u| !**u).count();
    for l in labels.iter().filter(|l| l.class.is_none()) {
        out.push(LabeledWindow {
            window: stream.window(l.t, detector.window_len),
            label: None,
            hand,
        });
        summary.ood += 1;
    }
    Ok((out, summary))
}

/// Synthesizes streams for both hands, alternating, until roughly
/// `taps_per_class` taps of every class are scheduled, and cuts them into
/// windows.
pub fn synthesize(spec: &GeneratorSpec, detector: &DetectorConfig, taps_per_class: usize, seed: u64) -> Result<(Vec<LabeledWindow>, CutSummary)> {
    const CHUNK: usize = 240;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining = taps_per_class * FingerClass::COUNT;
    let mut out = Vec::new();
    let mut summary = CutSummary::default();
    let mut chunk = 0u64;
    while remaining > 0 {
        let n = remaining.min(CHUNK);
        let hand = if chunk % 2 == 0 { Hand::Left } else { Hand::Right };
        let (events, len) = schedule(spec, &FingerClass::ALL, n, &mut rng);
        let (stream, labels) = render(spec, hand, len, &events, rng.gen())?;
        let (windows, s) = cut_windows(&stream, hand, &labels, detector)?;
        out.extend(windows);
        summary += s;
        remaining -= n;
        chunk += 1;
    }
    Ok((out, summary))
}

/// Windows of `participants` simulated people, one list per person. Each
/// person taps with their own perturbation of the templates (see
/// [`GeneratorSpec::participant`]), so holding one person out measures
/// how a classifier carries over to someone it has not seen.
pub fn synthesize_participants(
    spec: &GeneratorSpec,
    detector: &DetectorConfig,
    participants: usize,
    taps_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Vec<Vec<LabeledWindow>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..participants)
        .map(|_| {
            let person = spec.participant(spread, rng.gen());
            synthesize(&person, detector, taps_per_class, rng.gen()).map(|(w, _)| w)
        })
        .collect()
}

/// Deterministic split into (first, rest) with `fraction` of the windows
/// in the first part.
pub fn split(data: &[LabeledWindow], fraction: f64, seed: u64) -> (Vec<LabeledWindow>, Vec<LabeledWindow>) {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (data.len() as f64 * fraction).round() as usize;
    let pick = |ids: &[usize]| ids.iter().map(|&i| data[i].clone()).collect();
    (pick(&idx[..cut]), pick(&idx[cut..]))
}

/// Number of windows per label, fingers first and out-of-distribution last.
pub fn class_counts(data: &[LabeledWindow]) -> [usize; FingerClass::COUNT + 1] {
    let mut counts = [0; FingerClass::COUNT + 1];
    for w in data {
        counts[w.label.map_or(FingerClass::COUNT, FingerClass::index)] += 1;
    }
    counts
}
