//! Character n-gram model with interpolated Witten-Bell smoothing.
//!
//! Words are modelled independently: each word is the token sequence
//! `<s> c1 … cn </s>`, so character history never crosses a space.

use std::collections::HashMap;
use std::path::Path;

use super::arpa;
use super::backoff::{BackoffModel, Entry, LOG_PROB_FLOOR};
use super::corpus::Corpus;
use super::vocab::Vocab;
use crate::domain::CHARSET;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct CharLm {
    model: BackoffModel,
    ids: [Option<u32>; 128],
}

impl CharLm {
    pub const DEFAULT_ORDER: usize = 12;

    pub fn vocab() -> Vocab {
        Vocab::new(CHARSET.chars().map(String::from), false)
    }

    /// Trains on every word of `corpus`.
    pub fn train(corpus: &Corpus, order: usize) -> Result<Self> {
        Self::train_words(corpus.words(), order)
    }

    pub fn train_words<'a>(words: impl IntoIterator<Item = &'a str>, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("character model order must be at least 1".into()));
        }
        let vocab = Self::vocab();
        let mut sequences = Vec::new();
        for w in words {
            let mut seq = Vec::with_capacity(w.len() + 2);
            seq.push(Vocab::BOS_ID);
            for c in w.chars() {
                let id = vocab
                    .id(c.encode_utf8(&mut [0; 4]))
                    .ok_or_else(|| Error::Config(format!("character {c:?} is not in the model alphabet")))?;
                seq.push(id);
            }
            seq.push(Vocab::EOS_ID);
            sequences.push(seq);
        }
        if sequences.is_empty() {
            return Err(Error::Empty("character model training corpus"));
        }
        let model = witten_bell(vocab, &sequences, order)?;
        Self::from_model(model)
    }

    pub fn from_model(model: BackoffModel) -> Result<Self> {
        let mut ids = [None; 128];
        for c in CHARSET.chars() {
            let id = model
                .vocab()
                .id(c.encode_utf8(&mut [0; 4]))
                .ok_or_else(|| Error::Format(format!("character model lacks {c:?}")))?;
            ids[c as usize] = Some(id);
        }
        Ok(Self { model, ids })
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

    pub fn char_id(&self, c: char) -> Option<u32> {
        self.ids.get(c as usize).copied().flatten()
    }

    /// Token ids of `<s>` followed by `history`.
    pub fn context_ids(&self, history: &str) -> Result<Vec<u32>> {
        std::iter::once(Ok(Vocab::BOS_ID))
            .chain(history.chars().map(|c| self.char_id(c).ok_or_else(|| Error::Config(format!("character {c:?} is not in the model alphabet")))))
            .collect()
    }

    pub fn log_prob_ids(&self, context: &[u32], next: u32) -> f64 {
        self.model.log_prob(context, next)
    }

    /// ln p(c | <s> history).
    pub fn log_prob(&self, history: &str, c: char) -> Result<f64> {
        let ctx = self.context_ids(history)?;
        let id = self.char_id(c).ok_or_else(|| Error::Config(format!("character {c:?} is not in the model alphabet")))?;
        Ok(self.model.log_prob(&ctx, id))
    }

    /// ln p(</s> | <s> history).
    pub fn log_prob_end(&self, history: &str) -> Result<f64> {
        Ok(self.model.log_prob(&self.context_ids(history)?, Vocab::EOS_ID))
    }

    /// Sum of ln p(c_i | <s> c_1 … c_{i-1}) over the characters of `word`.
    /// The end-of-word token is not included.
    pub fn score_word(&self, word: &str) -> Result<f64> {
        self.score_continuation("", word)
    }

    /// Score of `continuation` given that `history` has already been typed
    /// in the same word.
    pub fn score_continuation(&self, history: &str, continuation: &str) -> Result<f64> {
        let mut ctx = self.context_ids(history)?;
        let mut total = 0.0;
        for c in continuation.chars() {
            let id = self.char_id(c).ok_or_else(|| Error::Config(format!("character {c:?} is not in the model alphabet")))?;
            total += self.model.log_prob(&ctx, id);
            ctx.push(id);
        }
        Ok(total)
    }
}

/// Interpolated Witten-Bell estimate over token sequences that start with
/// `<s>`. Every order uses raw counts; the unigram level interpolates with
/// the uniform distribution over predictable tokens.
pub fn witten_bell(vocab: Vocab, sequences: &[Vec<u32>], order: usize) -> Result<BackoffModel> {
    let mut model = BackoffModel::new(vocab, order)?;
    let counts = count_ngrams(&model, sequences, order);
    let base = model.base();

    let total: u64 = counts[0].values().sum();
    if total == 0 {
        return Err(Error::Empty("no tokens to count"));
    }
    let types = counts[0].len() as f64;
    let predictable = (model.vocab().len() - 1) as f64;
    let denom = total as f64 + types;
    let ids: Vec<u32> = model.vocab().predictable().collect();
    for w in ids {
        let c = counts[0].get(&(w as u128 + 1)).copied().unwrap_or(0) as f64;
        model.insert(&[w], Entry::new(((c + types / predictable) / denom).ln()));
    }
    model.insert(&[Vocab::BOS_ID], Entry::new(LOG_PROB_FLOOR));

    for k in 2..=order {
        let mut contexts: HashMap<u128, (u64, u64)> = HashMap::new();
        for (&g, &c) in &counts[k - 1] {
            let stats = contexts.entry(g / base).or_insert((0, 0));
            stats.0 += c;
            stats.1 += 1;
        }
        let mut entries = Vec::with_capacity(counts[k - 1].len());
        for (&g, &c) in &counts[k - 1] {
            let (ctx_count, ctx_types) = contexts[&(g / base)];
            let tokens = model.unpack(g, k);
            let lower = model.log_prob(&tokens[1..k - 1], tokens[k - 1]).exp();
            let p = (c as f64 + ctx_types as f64 * lower) / (ctx_count + ctx_types) as f64;
            entries.push((g, Entry::new(p.ln())));
        }
        for (g, e) in entries {
            model.insert_by_key(k, g, e);
        }
        for (h, (ctx_count, ctx_types)) in contexts {
            let weight = (ctx_types as f64 / (ctx_count + ctx_types) as f64).ln();
            let entry = model
                .entry_mut(k - 1, h)
                .ok_or_else(|| Error::Format("context without an n-gram entry".into()))?;
            entry.backoff = weight;
        }
    }
    Ok(model)
}

/// Raw counts of every n-gram that ends on a predicted token, for lengths
/// `1..=order`. N-grams never reach left of the leading `<s>`.
pub(crate) fn count_ngrams(model: &BackoffModel, sequences: &[Vec<u32>], order: usize) -> Vec<HashMap<u128, u64>> {
    let base = model.base();
    let mut counts = vec![HashMap::new(); order];
    for seq in sequences {
        for i in 1..seq.len() {
            let mut key = 0u128;
            let mut scale = 1u128;
            for k in 1..=order.min(i + 1) {
                let t = seq[i + 1 - k];
                key += (t as u128 + 1) * scale;
                scale *= base;
                *counts[k - 1].entry(key).or_insert(0) += 1;
            }
        }
    }
    counts
}
