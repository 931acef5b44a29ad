//! Word n-gram model with interpolated modified Kneser-Ney smoothing.
//!
//! Conventions follow the usual ARPA-producing toolkits: sentences are
//! `<s> w1 … wn </s>`, lower orders use continuation counts except for
//! n-grams that start with `<s>`, and the unigram level interpolates with
//! the uniform distribution over every predictable token (`<unk>` included).

use std::collections::HashMap;
use std::path::Path;

use log::warn;

use super::arpa;
use super::backoff::{BackoffModel, Entry, LOG_PROB_FLOOR};
use super::char_lm::count_ngrams;
use super::corpus::Corpus;
use super::vocab::{Vocab, BOS};
use crate::error::{Error, Result};

/// Discounts for adjusted counts 0, 1, 2 and 3+.
pub type Discounts = [f64; 4];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Discounting {
    /// Closed-form estimates from count-of-counts, per order.
    ModifiedKneserNey,
    /// The same discount for every count and order.
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct WordLmConfig {
    pub order: usize,
    /// Keep at most this many of the most frequent words.
    pub vocab_cap: Option<usize>,
    pub min_count: u64,
    pub discounting: Discounting,
    /// Used for an order whose count-of-counts cannot support closed-form
    /// discounts.
    pub fallback_discount: f64,
}

impl Default for WordLmConfig {
    fn default() -> Self {
        Self {
            order: 4,
            vocab_cap: Some(100_000),
            min_count: 1,
            discounting: Discounting::ModifiedKneserNey,
            fallback_discount: 0.7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct WordLm {
    model: BackoffModel,
    discounts: Vec<Discounts>,
}

impl WordLm {
    pub fn train(corpus: &Corpus, config: &WordLmConfig) -> Result<Self> {
        let words = corpus.vocabulary(config.min_count, config.vocab_cap);
        Self::train_with_vocab(corpus, words, config)
    }

    /// Trains with an explicit word list; corpus words outside it map to `<unk>`.
    pub fn train_with_vocab(corpus: &Corpus, words: Vec<String>, config: &WordLmConfig) -> Result<Self> {
        if config.order == 0 {
            return Err(Error::Config("word model order must be at least 1".into()));
        }
        if corpus.is_empty() {
            return Err(Error::Empty("word model training corpus"));
        }
        let vocab = Vocab::new(words, true);
        let unk = vocab.unk().expect("word vocabulary has <unk>");
        let sequences: Vec<Vec<u32>> = corpus
            .sentences()
            .iter()
            .map(|s| {
                std::iter::once(Vocab::BOS_ID)
                    .chain(s.iter().map(|w| vocab.id(w).unwrap_or(unk)))
                    .chain(std::iter::once(Vocab::EOS_ID))
                    .collect()
            })
            .collect();
        let (model, discounts) = kneser_ney(vocab, &sequences, config)?;
        Ok(Self { model, discounts })
    }

    pub fn from_model(model: BackoffModel) -> Result<Self> {
        if model.vocab().unk().is_none() {
            return Err(Error::Format("word model needs an <unk> token".into()));
        }
        Ok(Self {
            model,
            discounts: Vec::new(),
        })
    }

    pub fn read_arpa(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::from_model(arpa::read_arpa(file)?)
    }

    pub fn write_arpa(&self, path: impl AsRef<Path>) -> Result<()> {
        arpa::write_arpa(&self.model, std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn model(&self) -> &BackoffModel {
        &self.model
    }

    pub fn order(&self) -> usize {
        self.model.order()
    }

    /// Discounts used per order during training; empty for loaded models.
    pub fn discounts(&self) -> &[Discounts] {
        &self.discounts
    }

    /// Whether `word` is a regular vocabulary word.
    pub fn contains(&self, word: &str) -> bool {
        match self.model.vocab().id(word) {
            Some(id) => id > Vocab::EOS_ID && Some(id) != self.model.vocab().unk(),
            None => false,
        }
    }

    /// Regular vocabulary words in id order.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        let unk = self.model.vocab().unk();
        self.model
            .vocab()
            .tokens()
            .iter()
            .enumerate()
            .filter(move |&(i, _)| i as u32 > Vocab::EOS_ID && Some(i as u32) != unk)
            .map(|(_, w)| w.as_str())
    }

    fn id(&self, word: &str) -> u32 {
        let vocab = self.model.vocab();
        vocab.id_or_unk(word).expect("word vocabulary has <unk>")
    }

    /// Ids of `<s>` followed by `history`, unknown words mapped to `<unk>`.
    pub fn context_ids<S: AsRef<str>>(&self, history: &[S]) -> Vec<u32> {
        std::iter::once(Vocab::BOS_ID)
            .chain(history.iter().map(|w| self.id(w.as_ref())))
            .collect()
    }

    /// ln p(word | <s> history). Out-of-vocabulary words score as `<unk>`.
    pub fn log_prob<S: AsRef<str>>(&self, history: &[S], word: &str) -> f64 {
        self.model.log_prob(&self.context_ids(history), self.id(word))
    }

    pub fn log_prob_end<S: AsRef<str>>(&self, history: &[S]) -> f64 {
        self.model.log_prob(&self.context_ids(history), Vocab::EOS_ID)
    }

    /// Sum of conditional log probabilities of `words` after `<s>`, without `</s>`.
    pub fn score_sequence<S: AsRef<str>>(&self, words: &[S]) -> f64 {
        self.token_log_probs(words, false).iter().sum()
    }

    /// Per-token ln probabilities of a sentence, optionally including `</s>`.
    pub fn token_log_probs<S: AsRef<str>>(&self, words: &[S], with_end: bool) -> Vec<f64> {
        let mut ctx = vec![Vocab::BOS_ID];
        let mut out = Vec::with_capacity(words.len() + 1);
        for w in words {
            let id = self.id(w.as_ref());
            out.push(self.model.log_prob(&ctx, id));
            ctx.push(id);
        }
        if with_end {
            out.push(self.model.log_prob(&ctx, Vocab::EOS_ID));
        }
        out
    }
}

fn closed_form_discounts(counts_of_counts: &[u64; 5]) -> Option<Discounts> {
    let n = counts_of_counts;
    if n[1] == 0 || n[2] == 0 || n[3] == 0 {
        return None;
    }
    let y = n[1] as f64 / (n[1] as f64 + 2.0 * n[2] as f64);
    let mut d = [0.0; 4];
    for j in 1..4 {
        d[j] = j as f64 - (j + 1) as f64 * y * n[j + 1] as f64 / n[j] as f64;
        if d[j] < 0.0 || d[j] > j as f64 {
            return None;
        }
    }
    Some(d)
}

fn discount(d: &Discounts, count: u64) -> f64 {
    d[count.min(3) as usize]
}

pub(crate) fn kneser_ney(vocab: Vocab, sequences: &[Vec<u32>], config: &WordLmConfig) -> Result<(BackoffModel, Vec<Discounts>)> {
    let order = config.order;
    let mut model = BackoffModel::new(vocab, order)?;
    let base = model.base();
    let raw = count_ngrams(&model, sequences, order);
    if raw[0].is_empty() {
        return Err(Error::Empty("no tokens to count"));
    }
    let pow: Vec<u128> = (0..=order as u32).map(|k| base.pow(k)).collect();

    // Continuation counts for every order below the top, except n-grams
    // anchored at <s>, which have no left context and keep their raw count.
    let mut adjusted: Vec<HashMap<u128, u64>> = vec![HashMap::new(); order];
    adjusted[order - 1] = raw[order - 1].clone();
    for k in 1..order {
        let bos_first = Vocab::BOS_ID as u128 + 1;
        let mut adj: HashMap<u128, u64> = raw[k - 1]
            .iter()
            .filter(|(&g, _)| g / pow[k - 1] == bos_first)
            .map(|(&g, &c)| (g, c))
            .collect();
        for &g in raw[k].keys() {
            *adj.entry(g % pow[k]).or_insert(0) += 1;
        }
        adjusted[k - 1] = adj;
    }

    let mut discounts = Vec::with_capacity(order);
    for (k, adj) in adjusted.iter().enumerate() {
        let d = match config.discounting {
            Discounting::Fixed(d) => [0.0, d, d, d],
            Discounting::ModifiedKneserNey => {
                let mut n = [0u64; 5];
                for &c in adj.values() {
                    if (1..=4).contains(&c) {
                        n[c as usize] += 1;
                    }
                }
                closed_form_discounts(&n).unwrap_or_else(|| {
                    let f = config.fallback_discount;
                    warn!("{}-gram count-of-counts {:?} do not support closed-form discounts; using {f}", k + 1, &n[1..]);
                    [0.0, f, f, f]
                })
            }
        };
        discounts.push(d);
    }

    // Unigrams interpolate with the uniform distribution.
    let d = &discounts[0];
    let denom: u64 = adjusted[0].values().sum();
    let gamma: f64 = adjusted[0].values().map(|&a| discount(d, a)).sum::<f64>() / denom as f64;
    let predictable = (model.vocab().len() - 1) as f64;
    let ids: Vec<u32> = model.vocab().predictable().collect();
    for w in ids {
        let a = adjusted[0].get(&(w as u128 + 1)).copied().unwrap_or(0);
        let p = (a as f64 - discount(d, a)) / denom as f64 + gamma / predictable;
        model.insert(&[w], Entry::new(p.ln()));
    }
    model.insert(&[Vocab::BOS_ID], Entry::new(LOG_PROB_FLOOR));

    for k in 2..=order {
        let d = &discounts[k - 1];
        let mut contexts: HashMap<u128, (u64, f64)> = HashMap::new();
        for (&g, &a) in &adjusted[k - 1] {
            let stats = contexts.entry(g / base).or_insert((0, 0.0));
            stats.0 += a;
            stats.1 += discount(d, a);
        }
        let mut entries = Vec::with_capacity(adjusted[k - 1].len());
        for (&g, &a) in &adjusted[k - 1] {
            let (denom, mass) = contexts[&(g / base)];
            let tokens = model.unpack(g, k);
            let lower = model.log_prob(&tokens[1..k - 1], tokens[k - 1]).exp();
            let p = (a as f64 - discount(d, a)) / denom as f64 + mass / denom as f64 * lower;
            entries.push((g, Entry::new(p.ln())));
        }
        for (g, e) in entries {
            model.insert_by_key(k, g, e);
        }
        for (h, (denom, mass)) in contexts {
            let gamma = mass / denom as f64;
            let entry = model
                .entry_mut(k - 1, h)
                .ok_or_else(|| Error::Format("context without an n-gram entry".into()))?;
            entry.backoff = if gamma > 0.0 { gamma.ln() } else { LOG_PROB_FLOOR };
        }
    }
    debug_assert_eq!(model.vocab().token(Vocab::BOS_ID), BOS);
    Ok((model, discounts))
}
