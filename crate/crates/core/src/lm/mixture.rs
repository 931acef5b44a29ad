//! Linear interpolation of word models in probability space.

use super::word_lm::WordLm;
use crate::error::{Error, Result};

/// A model that scores every token of a sentence, `</s>` included.
pub trait SentenceModel {
    /// ln p of each token of `words` followed by `</s>`.
    fn token_log_probs(&self, words: &[String]) -> Vec<f64>;

    /// Per-token cross-entropy in nats.
    fn cross_entropy(&self, words: &[String]) -> f64 {
        let lp = self.token_log_probs(words);
        -lp.iter().sum::<f64>() / lp.len() as f64
    }
}

impl SentenceModel for WordLm {
    fn token_log_probs(&self, words: &[String]) -> Vec<f64> {
        WordLm::token_log_probs(self, words, true)
    }
}

/// Corpus-level per-token cross-entropy in nats.
pub fn corpus_cross_entropy<M: SentenceModel + ?Sized>(model: &M, sentences: &[Vec<String>]) -> f64 {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for s in sentences {
        let lp = model.token_log_probs(s);
        tokens += lp.len();
        total -= lp.iter().sum::<f64>();
    }
    total / tokens.max(1) as f64
}

#[derive(Clone, Debug)]
pub struct Mixture<'a> {
    components: Vec<&'a WordLm>,
    weights: Vec<f64>,
}

impl<'a> Mixture<'a> {
    pub fn new(components: Vec<&'a WordLm>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("mixture components"));
        }
        if components.len() != weights.len() {
            return Err(Error::Shape {
                expected: format!("{} weights", components.len()),
                actual: weights.len().to_string(),
            });
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(0.0..=1.0).contains(&w)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mixture weights {weights:?} must be a distribution")));
        }
        Ok(Self { components, weights })
    }

    /// Picks weights on a simplex grid with spacing `step` that minimize
    /// held-out cross-entropy. Ties keep the first grid point found, which
    /// favours earlier components.
    pub fn fit(components: Vec<&'a WordLm>, heldout: &[Vec<String>], step: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("mixture components"));
        }
        if heldout.is_empty() {
            return Err(Error::Empty("held-out sentences"));
        }
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::Config(format!("grid step {step} must be in (0, 1]")));
        }
        let steps = (1.0 / step).round() as usize;
        // token probabilities per component, computed once
        let probs: Vec<Vec<f64>> = components
            .iter()
            .map(|m| {
                heldout
                    .iter()
                    .flat_map(|s| SentenceModel::token_log_probs(*m, s))
                    .map(f64::exp)
                    .collect()
            })
            .collect();
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut point = vec![0usize; components.len()];
        for_each_composition(steps, &mut point, 0, &mut |units| {
            let weights: Vec<f64> = units.iter().map(|&u| u as f64 / steps as f64).collect();
            let ce = -(0..probs[0].len())
                .map(|t| weights.iter().zip(&probs).map(|(w, p)| w * p[t]).sum::<f64>().ln())
                .sum::<f64>();
            if best.as_ref().map_or(true, |(b, _)| ce < *b) {
                best = Some((ce, units.to_vec()));
            }
        });
        let (_, units) = best.expect("grid has at least one point");
        let weights = units.iter().map(|&u| u as f64 / steps as f64).collect();
        Self::new(components, weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// ln Σ_i λ_i p_i(word | <s> history).
    pub fn log_prob<S: AsRef<str>>(&self, history: &[S], word: &str) -> f64 {
        self.components
            .iter()
            .zip(&self.weights)
            .map(|(m, w)| w * m.log_prob(history, word).exp())
            .sum::<f64>()
            .ln()
    }
}

impl SentenceModel for Mixture<'_> {
    fn token_log_probs(&self, words: &[String]) -> Vec<f64> {
        let per: Vec<Vec<f64>> = self.components.iter().map(|m| SentenceModel::token_log_probs(*m, words)).collect();
        (0..per[0].len())
            .map(|t| self.weights.iter().zip(&per).map(|(w, p)| w * p[t].exp()).sum::<f64>().ln())
            .collect()
    }
}

/// Calls `f` with every way of writing `total` as an ordered sum of
/// `point.len()` non-negative parts.
fn for_each_composition(total: usize, point: &mut Vec<usize>, at: usize, f: &mut impl FnMut(&[usize])) {
    if at + 1 == point.len() {
        point[at] = total;
        f(point);
        return;
    }
    for u in (0..=total).rev() {
        point[at] = u;
        for_each_composition(total - u, point, at + 1, f);
    }
}
