//! Cross-entropy-difference corpus selection.
//!
//! Sentences of a general ("query") corpus are scored by how much better an
//! in-domain model predicts them than a model of the query corpus itself:
//! `score(s) = H_query(s) − H_in(s)` in nats per token, so higher scores are
//! more in-domain. Selection keeps sentences scoring above a threshold.

use log::info;

use super::corpus::Corpus;
use super::mixture::{corpus_cross_entropy, Mixture, SentenceModel};
use super::word_lm::{Discounting, WordLm, WordLmConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionConfig {
    pub order: usize,
    /// Absolute discount of the selection models.
    pub discount: f64,
    /// Fraction of each in-domain corpus held out for mixture weights and
    /// subset ranking.
    pub heldout_fraction: f64,
    /// Words need this many in-domain occurrences to enter the vocabulary.
    pub min_count: u64,
    /// Query sentences used to train the query model; `None` matches the
    /// in-domain training size.
    pub query_sample: Option<usize>,
    pub grid_step: f64,
    /// Train a model per subset and report its held-out perplexity.
    pub rank_subsets: bool,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            order: 4,
            discount: 0.7,
            heldout_fraction: 0.1,
            min_count: 2,
            query_sample: None,
            grid_step: 0.05,
            rank_subsets: false,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subset {
    pub threshold: f64,
    /// Indices into the query corpus, ascending.
    pub indices: Vec<usize>,
    /// Held-out in-domain perplexity of a model trained on the subset.
    pub heldout_perplexity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// One score per query sentence.
    pub scores: Vec<f64>,
    /// Interpolation weights of the in-domain components.
    pub weights: Vec<f64>,
    pub subsets: Vec<Subset>,
}

impl Selection {
    /// Subset with the lowest held-out perplexity, if subsets were ranked.
    pub fn best_subset(&self) -> Option<&Subset> {
        self.subsets
            .iter()
            .filter(|s| s.heldout_perplexity.is_some())
            .min_by(|a, b| a.heldout_perplexity.partial_cmp(&b.heldout_perplexity).unwrap())
    }
}

/// Per-sentence `H_query(s) − H_in(s)`.
pub fn cross_entropy_difference<Q, I>(query_model: &Q, in_domain_model: &I, corpus: &Corpus) -> Vec<f64>
where
    Q: SentenceModel + ?Sized,
    I: SentenceModel + ?Sized,
{
    corpus
        .sentences()
        .iter()
        .map(|s| query_model.cross_entropy(s) - in_domain_model.cross_entropy(s))
        .collect()
}

/// Indices of sentences whose score is strictly above `threshold`.
/// `-inf` selects everything.
pub fn above_threshold(scores: &[f64], threshold: f64) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|&(_, &s)| threshold == f64::NEG_INFINITY || s > threshold)
        .map(|(i, _)| i)
        .collect()
}

/// `n` thresholds whose subsets grow logarithmically in size, from
/// `min_size` sentences up to every sentence.
pub fn log_spaced_thresholds(scores: &[f64], n: usize, min_size: usize) -> Vec<f64> {
    if scores.is_empty() || n == 0 {
        return Vec::new();
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let lo = (min_size.max(1) as f64).ln();
    let hi = (sorted.len() as f64).ln();
    (0..n)
        .map(|i| {
            let frac = if n == 1 { 1.0 } else { i as f64 / (n - 1) as f64 };
            let size = (lo + frac * (hi - lo)).exp().round() as usize;
            let size = size.clamp(1, sorted.len());
            if size == sorted.len() {
                f64::NEG_INFINITY
            } else {
                // keep the `size` best: threshold sits at the next score down
                sorted[size]
            }
        })
        .collect()
}

fn selection_lm_config(config: &SelectionConfig) -> WordLmConfig {
    WordLmConfig {
        order: config.order,
        vocab_cap: None,
        min_count: 1,
        discounting: Discounting::Fixed(config.discount),
        fallback_discount: config.discount,
    }
}

/// Scores `query` against a mixture of models trained on `in_domain`
/// corpora and returns the sentences above each threshold.
pub fn select_corpus(query: &Corpus, in_domain: &[Corpus], thresholds: &[f64], config: &SelectionConfig) -> Result<Selection> {
    if thresholds.is_empty() {
        return Err(Error::Empty("selection thresholds"));
    }
    if query.is_empty() {
        return Err(Error::Empty("query corpus"));
    }
    if in_domain.is_empty() || in_domain.iter().any(Corpus::is_empty) {
        return Err(Error::Empty("in-domain corpus"));
    }

    let mut train_parts = Vec::new();
    let mut heldout = Vec::new();
    for (i, c) in in_domain.iter().enumerate() {
        let (held, train) = c.split(config.heldout_fraction, config.seed.wrapping_add(i as u64));
        let (held, train) = if train.is_empty() { (Corpus::default(), c.clone()) } else { (held, train) };
        heldout.extend(held.sentences().iter().cloned());
        train_parts.push(train);
    }
    let all_train = Corpus::from_sentences(train_parts.iter().flat_map(|c| c.sentences().iter().cloned()).collect());
    let vocab = all_train.vocabulary(config.min_count, None);
    let lm_config = selection_lm_config(config);

    let components = train_parts
        .iter()
        .map(|c| WordLm::train_with_vocab(c, vocab.clone(), &lm_config))
        .collect::<Result<Vec<_>>>()?;
    let mixture = if components.len() == 1 || heldout.is_empty() {
        let k = components.len();
        Mixture::new(components.iter().collect(), vec![1.0 / k as f64; k])?
    } else {
        Mixture::fit(components.iter().collect(), &heldout, config.grid_step)?
    };
    info!("in-domain mixture weights {:?}", mixture.weights());

    let sample = query.sample(config.query_sample.unwrap_or(all_train.len()), config.seed);
    let query_model = WordLm::train_with_vocab(&sample, vocab.clone(), &lm_config)?;
    let scores = cross_entropy_difference(&query_model, &mixture, query);

    let mut subsets = Vec::with_capacity(thresholds.len());
    for &threshold in thresholds {
        let indices = above_threshold(&scores, threshold);
        let heldout_perplexity = if config.rank_subsets && !indices.is_empty() && !heldout.is_empty() {
            let model = WordLm::train_with_vocab(&query.subset(&indices), vocab.clone(), &WordLmConfig { order: config.order, ..Default::default() })?;
            Some(corpus_cross_entropy(&model, &heldout).exp())
        } else {
            None
        };
        info!("threshold {threshold}: {} sentences, perplexity {heldout_perplexity:?}", indices.len());
        subsets.push(Subset {
            threshold,
            indices,
            heldout_perplexity,
        });
    }
    Ok(Selection {
        scores,
        weights: mixture.weights().to_vec(),
        subsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_threshold_list_is_rejected() {
        let c = Corpus::from_text("a b c\n");
        assert!(select_corpus(&c, &[c.clone()], &[], &SelectionConfig::default()).is_err());
    }

    #[test]
    fn identical_models_score_zero() {
        let c = Corpus::from_text("the cat sat\nthe dog ran\na bird flew\n");
        let m = WordLm::train(&c, &WordLmConfig { order: 3, ..Default::default() }).unwrap();
        assert!(cross_entropy_difference(&m, &m, &c).iter().all(|&s| s == 0.0));
    }

    #[test]
    fn log_spaced_subsets_grow() {
        let scores: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let t = log_spaced_thresholds(&scores, 4, 10);
        let sizes: Vec<usize> = t.iter().map(|&t| above_threshold(&scores, t).len()).collect();
        assert_eq!(sizes, vec![10, 46, 215, 1000]);
    }
}
