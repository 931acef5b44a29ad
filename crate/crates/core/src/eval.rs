//! Offline evaluation: recall of the target word in the suggestion list
//! under simulated classifier noise, text entry rate and character error
//! rate, and side-by-side classifier comparisons.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::dataset::LabeledWindow;
use crate::classifier::{metrics, ClassificationMetrics, Classifier, ClassifierConfig, ConfusionClassifier};
use crate::decoder::{Decoder, DecoderConfig};
use crate::domain::{FingerClass, Hand, PhraseSet, TapObservation};
use crate::error::{Error, Result};
use crate::signal::Frame;

/// Character error rate: unit-cost Levenshtein distance over characters
/// divided by the reference length.
pub fn cer(predicted: &str, reference: &str) -> Result<f64> {
    let p: Vec<char> = predicted.chars().collect();
    let r: Vec<char> = reference.chars().collect();
    if r.is_empty() {
        return Err(Error::Empty("reference text"));
    }
    Ok(levenshtein(&p, &r) as f64 / r.len() as f64)
}

pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + (x != y) as usize).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Words per minute with the five-character word.
pub fn wpm(chars: usize, seconds: f64) -> Result<f64> {
    if !(seconds > 0.0) {
        return Err(Error::Config(format!("duration must be positive, got {seconds}")));
    }
    Ok((chars as f64 / 5.0) / (seconds / 60.0))
}

/// Produces a classifier output for a tap by a known finger.
pub trait TapSource {
    fn observe(&mut self, hand: Hand, finger: FingerClass) -> Result<TapObservation>;
    /// Restarts the randomness, so a phrase's taps do not depend on what
    /// was simulated before it.
    fn reseed(&mut self, seed: u64);
}

impl TapSource for ConfusionClassifier {
    fn observe(&mut self, hand: Hand, finger: FingerClass) -> Result<TapObservation> {
        Ok(ConfusionClassifier::observe(self, hand, finger, 0))
    }

    fn reseed(&mut self, seed: u64) {
        ConfusionClassifier::reseed(self, seed);
    }
}

/// A trained classifier run on recorded windows of the requested finger,
/// drawn at random per tap. Rejected windows still pass their
/// probabilities on, as the simulation measures decoding alone.
pub struct WindowSource<'a> {
    classifier: &'a Classifier,
    pool: BTreeMap<(Hand, FingerClass), Vec<&'a [Frame]>>,
    passes: usize,
    rng: ChaCha8Rng,
}

impl<'a> WindowSource<'a> {
    /// Windows of either hand can serve both: the network sees mirrored
    /// input, so a window is re-labelled with the requested hand.
    pub fn new(classifier: &'a Classifier, windows: &'a [LabeledWindow], passes: usize, seed: u64) -> Result<Self> {
        let mut pool: BTreeMap<(Hand, FingerClass), Vec<&[Frame]>> = BTreeMap::new();
        for w in windows {
            if let Some(c) = w.label {
                pool.entry((w.hand, c)).or_default().push(&w.window);
            }
        }
        for c in FingerClass::TYPING {
            if Hand::ALL.iter().all(|&h| !pool.contains_key(&(h, c))) {
                return Err(Error::MissingClass(c.name().to_owned()));
            }
        }
        Ok(Self {
            classifier,
            pool,
            passes,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }
}

impl TapSource for WindowSource<'_> {
    fn observe(&mut self, hand: Hand, finger: FingerClass) -> Result<TapObservation> {
        let (source_hand, windows) = match self.pool.get(&(hand, finger)) {
            Some(w) => (hand, w),
            None => (hand.other(), self.pool.get(&(hand.other(), finger)).ok_or_else(|| Error::MissingClass(finger.name().to_owned()))?),
        };
        let window = windows[self.rng.gen_range(0..windows.len())];
        let prediction = self.classifier.predict_with(window, source_hand, self.passes, &mut self.rng)?;
        Ok(TapObservation {
            hand,
            probs: prediction.probs,
            timestamp: 0,
        })
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    /// Cut-offs for recall, ascending.
    pub ks: Vec<usize>,
    /// Passes over the phrase set.
    pub repetitions: usize,
    /// Stop after this many words.
    pub max_words: Option<usize>,
    /// Seconds per tap or gesture in the simulated session.
    pub seconds_per_event: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            ks: vec![1, 2, 3, 4, 5, 10, 20],
            repetitions: 1,
            max_words: None,
            seconds_per_event: 0.3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhraseResult {
    pub reference: String,
    pub entered: String,
    pub cer: f64,
    pub wpm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// (k, share of words ranked within the top k).
    pub recall: Vec<(usize, f64)>,
    pub words: usize,
    pub phrases: Vec<PhraseResult>,
    pub mean_cer: f64,
    pub se_cer: f64,
    pub mean_wpm: f64,
    pub se_wpm: f64,
}

impl EvalReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.recall.iter().find(|(kk, _)| *kk == k).map(|(_, r)| *r)
    }
}

/// Seed of one phrase in one repetition, derived from its text so that
/// reordering the phrase set does not change any phrase's taps.
pub fn phrase_seed(seed: u64, repetition: usize, phrase: &str) -> u64 {
    // FNV-1a over the text, then a ChaCha draw to spread the bits
    let hash = phrase.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ hash);
    rng.set_stream(repetition as u64);
    rng.gen()
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Types every phrase word by word: each character becomes a tap by its
/// mapped finger, the tap source turns it into an observation and the
/// decoder ranks candidates given the true preceding words. The source is
/// reseeded per phrase and repetition, so results do not depend on phrase
/// order. The simulated
/// user cycles to the target when it is listed and otherwise takes the
/// top suggestion (or the raw character sequence when there is none).
pub fn simulate_recall(phrases: &PhraseSet, decoder: &Decoder, source: &mut dyn TapSource, config: &SimulationConfig) -> Result<EvalReport> {
    if config.ks.is_empty() || config.ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("k values must be nonempty and strictly ascending".into()));
    }
    let oov: Vec<String> = {
        let mut v: Vec<String> = phrases.words().filter(|w| !decoder.in_vocabulary(w)).map(str::to_owned).collect();
        v.sort();
        v.dedup();
        v
    };
    if !oov.is_empty() {
        return Err(Error::OutOfVocabulary(oov));
    }
    let k_max = *config.ks.last().expect("nonempty");
    let decoder = decoder.with_config(DecoderConfig {
        max_suggestions: k_max.max(decoder.config().max_suggestions),
        ..decoder.config().clone()
    })?;
    let listed = decoder.config().max_suggestions;
    let shown = DecoderConfig::default().max_suggestions;

    let mut hits = vec![0usize; config.ks.len()];
    let mut words = 0;
    let mut results = Vec::new();
    'outer: for rep in 0..config.repetitions.max(1) {
        for phrase in phrases.phrases() {
            source.reseed(phrase_seed(config.seed, rep, phrase));
            let targets: Vec<&str> = phrase.split(' ').collect();
            let mut entered: Vec<String> = Vec::new();
            let mut events = 0usize;
            for (i, target) in targets.iter().enumerate() {
                if config.max_words.is_some_and(|m| words >= m) {
                    break 'outer;
                }
                let mut obs = Vec::new();
                for c in target.chars() {
                    let (hand, finger) = decoder.map().finger_for(c).ok_or_else(|| Error::OutOfVocabulary(vec![(*target).to_owned()]))?;
                    obs.push(source.observe(hand, finger)?);
                }
                let decoded = decoder.decode(&obs, &targets[..i])?;
                let rank = decoded.suggestions.iter().position(|s| s.word == *target).map(|r| r + 1);
                for (h, &k) in hits.iter_mut().zip(&config.ks) {
                    if rank.is_some_and(|r| r <= k && r <= listed) {
                        *h += 1;
                    }
                }
                words += 1;
                events += obs.len() + 1;
                let word = match rank {
                    Some(r) if r <= shown => {
                        events += r - 1;
                        (*target).to_owned()
                    }
                    _ => decoded
                        .suggestions
                        .first()
                        .map(|s| s.word.clone())
                        .or(decoded.best_raw)
                        .unwrap_or_default(),
                };
                entered.push(word);
            }
            // the double space that submits the phrase
            events += 1;
            let entered = entered.join(" ");
            let seconds = events as f64 * config.seconds_per_event;
            results.push(PhraseResult {
                cer: cer(&entered, phrase)?,
                wpm: wpm(phrase.chars().count(), seconds)?,
                reference: phrase.clone(),
                entered,
            });
        }
    }
    if words == 0 {
        return Err(Error::Empty("phrase set"));
    }
    let recall = config.ks.iter().zip(&hits).map(|(&k, &h)| (k, h as f64 / words as f64)).collect();
    let (mean_cer, se_cer) = mean_and_se(&results.iter().map(|r| r.cer).collect::<Vec<_>>());
    let (mean_wpm, se_wpm) = mean_and_se(&results.iter().map(|r| r.wpm).collect::<Vec<_>>());
    Ok(EvalReport {
        recall,
        words,
        phrases: results,
        mean_cer,
        se_cer,
        mean_wpm,
        se_wpm,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub metrics: ClassificationMetrics,
    /// Share of out-of-distribution test windows rejected.
    pub ood_rejection: f64,
    pub recall: Vec<(usize, f64)>,
}

/// Trains each variant on `train` with the same seed, scores it on the
/// finger windows of `test`, and runs the recall simulation with taps
/// drawn from `test`.
pub fn compare_classifiers(
    variants: &[(String, ClassifierConfig)],
    train: &[LabeledWindow],
    test: &[LabeledWindow],
    phrases: &PhraseSet,
    decoder: &Decoder,
    simulation: &SimulationConfig,
) -> Result<Vec<ComparisonRow>> {
    let mut rows = Vec::new();
    for (name, config) in variants {
        let (model, _) = Classifier::train(train, config.clone(), simulation.seed)?;
        let row = evaluate_classifier(name, &model, test, phrases, decoder, simulation)?;
        rows.push(row);
    }
    Ok(rows)
}

/// Classification metrics, OOD rejection and decoding recall of a trained model.
pub fn evaluate_classifier(
    name: &str,
    model: &Classifier,
    test: &[LabeledWindow],
    phrases: &PhraseSet,
    decoder: &Decoder,
    simulation: &SimulationConfig,
) -> Result<ComparisonRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(simulation.seed ^ 0xe7a1);
    let passes = model.config().ensemble_infer;
    let fingers: Vec<&LabeledWindow> = test.iter().filter(|w| w.label.is_some()).collect();
    let inputs: Vec<(&[Frame], Hand)> = fingers.iter().map(|w| (w.window.as_slice(), w.hand)).collect();
    let probs: Vec<[f64; FingerClass::COUNT]> = model.predict_many(&inputs, passes, &mut rng)?.into_iter().map(|p| p.probs).collect();
    let labels: Vec<FingerClass> = fingers.iter().filter_map(|w| w.label).collect();
    let metrics = metrics(&probs, &labels)?;
    let ood: Vec<(&[Frame], Hand)> = test.iter().filter(|w| w.label.is_none()).map(|w| (w.window.as_slice(), w.hand)).collect();
    let ood_rejection = if ood.is_empty() {
        f64::NAN
    } else {
        let preds = model.predict_many(&ood, passes, &mut rng)?;
        preds.iter().filter(|p| p.rejected).count() as f64 / preds.len() as f64
    };
    let mut source = WindowSource::new(model, test, passes, simulation.seed)?;
    let report = simulate_recall(phrases, decoder, &mut source, simulation)?;
    Ok(ComparisonRow {
        name: name.to_owned(),
        metrics,
        ood_rejection,
        recall: report.recall,
    })
}
