//! Accuracy and calibration metrics over finger-labelled predictions.

use serde::{Deserialize, Serialize};

use crate::domain::FingerClass;
use crate::error::{Error, Result};

const N: usize = FingerClass::COUNT;

/// Probabilities are clipped to this before taking logs, so one-hot
/// predictions that are wrong give a large but finite log loss.
pub const PROB_FLOOR: f64 = 1e-15;

/// Calibration bins.
pub const ECE_BINS: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Mean negative log-likelihood of the true class.
    pub nll: f64,
    /// Expected calibration error of the top class.
    pub ece: f64,
    pub samples: usize,
}

pub fn metrics(probs: &[[f64; N]], labels: &[FingerClass]) -> Result<ClassificationMetrics> {
    if probs.len() != labels.len() {
        return Err(Error::Shape {
            expected: format!("{} predictions", labels.len()),
            actual: format!("{} predictions", probs.len()),
        });
    }
    if probs.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let predicted: Vec<usize> = probs.iter().map(argmax).collect();
    let truth: Vec<usize> = labels.iter().map(|c| c.index()).collect();
    let n = probs.len() as f64;
    let accuracy = predicted.iter().zip(&truth).filter(|(p, t)| p == t).count() as f64 / n;
    let nll = probs.iter().zip(&truth).map(|(p, &t)| -p[t].max(PROB_FLOOR).ln()).sum::<f64>() / n;
    Ok(ClassificationMetrics {
        accuracy,
        macro_f1: macro_f1(&predicted, &truth),
        nll,
        ece: expected_calibration_error(probs, &truth, ECE_BINS),
        samples: probs.len(),
    })
}

fn argmax(p: &[f64; N]) -> usize {
    let mut best = 0;
    for i in 1..N {
        if p[i] > p[best] {
            best = i;
        }
    }
    best
}

/// Unweighted mean of per-class F1 over classes that occur as truth or
/// prediction.
pub fn macro_f1(predicted: &[usize], truth: &[usize]) -> f64 {
    let mut tp = [0usize; N];
    let mut fp = [0usize; N];
    let mut fneg = [0usize; N];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p == t {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let mut sum = 0.0;
    let mut classes = 0;
    for k in 0..N {
        let denom = 2 * tp[k] + fp[k] + fneg[k];
        if denom > 0 {
            sum += 2.0 * tp[k] as f64 / denom as f64;
            classes += 1;
        }
    }
    if classes == 0 {
        0.0
    } else {
        sum / classes as f64
    }
}

/// Bins predictions by top-class confidence into `bins` equal-width bins
/// (a confidence of exactly 1 joins the last bin) and sums
/// `|bin accuracy − bin confidence|` weighted by bin share.
pub fn expected_calibration_error(probs: &[[f64; N]], truth: &[usize], bins: usize) -> f64 {
    let mut count = vec![0usize; bins];
    let mut conf = vec![0.0; bins];
    let mut correct = vec![0.0; bins];
    for (p, &t) in probs.iter().zip(truth) {
        let k = argmax(p);
        let c = p[k];
        let b = ((c * bins as f64) as usize).min(bins - 1);
        count[b] += 1;
        conf[b] += c;
        correct[b] += (k == t) as u8 as f64;
    }
    let n = probs.len() as f64;
    (0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| (correct[b] - conf[b]).abs() / n)
        .sum()
}
