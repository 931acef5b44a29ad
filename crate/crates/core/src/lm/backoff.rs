//! Back-off n-gram tables in the layout of an ARPA file.
//!
//! Both smoothers in this crate are interpolated. An interpolated model is
//! stored exactly in back-off form: every observed n-gram holds its full
//! interpolated probability and every observed context holds the weight that
//! scales the lower-order distribution for unseen continuations.

use std::collections::HashMap;

use super::vocab::Vocab;
use crate::error::{Error, Result};

/// Natural-log probability used for `<s>` as a predicted token (log10 of -99).
pub const LOG_PROB_FLOOR: f64 = -99.0 * std::f64::consts::LN_10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Entry {
    /// ln p(w | h)
    pub log_prob: f64,
    /// ln of the back-off weight when this n-gram is used as a context.
    pub backoff: f64,
}

impl Entry {
    pub fn new(log_prob: f64) -> Self {
        Self {
            log_prob,
            backoff: 0.0,
        }
    }
}

/// N-gram tables keyed by a packed token sequence.
///
/// A sequence `t0..tk` packs to `((t0+1)·B + (t1+1))·B + …` with `B = |V|+1`,
/// so the key of the context is `key / B` and the key of the suffix is
/// `key % B^(k-1)`.
#[derive(Clone, Debug)]
pub struct BackoffModel {
    vocab: Vocab,
    base: u128,
    tables: Vec<HashMap<u128, Entry>>,
}

impl BackoffModel {
    pub fn new(vocab: Vocab, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("n-gram order must be at least 1".into()));
        }
        let base = vocab.len() as u128 + 1;
        let mut capacity = 1u128;
        for _ in 0..order {
            capacity = capacity
                .checked_mul(base)
                .ok_or_else(|| Error::Config(format!("order {order} too large for a vocabulary of {}", vocab.len())))?;
        }
        Ok(Self {
            vocab,
            base,
            tables: vec![HashMap::new(); order],
        })
    }

    pub fn order(&self) -> usize {
        self.tables.len()
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub(crate) fn base(&self) -> u128 {
        self.base
    }

    pub fn key(&self, ngram: &[u32]) -> u128 {
        ngram.iter().fold(0u128, |k, &t| k * self.base + t as u128 + 1)
    }

    pub(crate) fn unpack(&self, mut key: u128, len: usize) -> Vec<u32> {
        let mut out = vec![0u32; len];
        for slot in out.iter_mut().rev() {
            *slot = (key % self.base) as u32 - 1;
            key /= self.base;
        }
        out
    }

    pub fn entry(&self, ngram: &[u32]) -> Option<&Entry> {
        if ngram.is_empty() || ngram.len() > self.order() {
            return None;
        }
        self.tables[ngram.len() - 1].get(&self.key(ngram))
    }

    pub(crate) fn entry_mut(&mut self, len: usize, key: u128) -> Option<&mut Entry> {
        self.tables[len - 1].get_mut(&key)
    }

    pub fn insert(&mut self, ngram: &[u32], entry: Entry) {
        let key = self.key(ngram);
        self.tables[ngram.len() - 1].insert(key, entry);
    }

    pub(crate) fn insert_by_key(&mut self, len: usize, key: u128, entry: Entry) {
        self.tables[len - 1].insert(key, entry);
    }

    /// Number of stored n-grams of length `len`.
    pub fn count(&self, len: usize) -> usize {
        self.tables[len - 1].len()
    }

    /// Stored n-grams of length `len`, sorted by token ids.
    pub fn ngrams(&self, len: usize) -> Vec<(Vec<u32>, Entry)> {
        let mut out: Vec<(Vec<u32>, Entry)> = self.tables[len - 1]
            .iter()
            .map(|(&k, &e)| (self.unpack(k, len), e))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// ln p(word | context). Only the last `order - 1` context tokens are used.
    /// Returns `-inf` for a word without a unigram entry.
    pub fn log_prob(&self, context: &[u32], word: u32) -> f64 {
        let keep = context.len().min(self.order() - 1);
        let ctx = &context[context.len() - keep..];
        let w = word as u128 + 1;
        let mut backoff = 0.0;
        for start in 0..=ctx.len() {
            let h = &ctx[start..];
            let hkey = self.key(h);
            if let Some(e) = self.tables[h.len()].get(&(hkey * self.base + w)) {
                return backoff + e.log_prob;
            }
            if !h.is_empty() {
                if let Some(e) = self.tables[h.len() - 1].get(&hkey) {
                    backoff += e.backoff;
                }
            }
        }
        f64::NEG_INFINITY
    }

    /// Copy restricted to the first `order` orders. Back-off weights of the new
    /// top order are dropped since nothing can back off into them.
    pub fn truncated(&self, order: usize) -> Result<Self> {
        if order == 0 || order > self.order() {
            return Err(Error::Config(format!("cannot truncate order {} to {order}", self.order())));
        }
        let mut tables: Vec<HashMap<u128, Entry>> = self.tables[..order].to_vec();
        for e in tables[order - 1].values_mut() {
            e.backoff = 0.0;
        }
        Ok(Self {
            vocab: self.vocab.clone(),
            base: self.base,
            tables,
        })
    }

    /// Sum over predictable tokens of p(w | context). Should be 1.
    pub fn total_probability(&self, context: &[u32]) -> f64 {
        self.vocab
            .predictable()
            .map(|w| self.log_prob(context, w).exp())
            .sum()
    }
}
