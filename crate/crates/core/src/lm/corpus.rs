use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domain::normalize_text;
use crate::error::Result;

/// Sentences of lowercase words over `a-z` and apostrophe.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    sentences: Vec<Vec<String>>,
}

impl Corpus {
    /// Normalizes each line; lines with digits or no words are dropped.
    pub fn from_lines<'a>(lines: impl IntoIterator<Item = &'a str>) -> Self {
        let sentences = lines
            .into_iter()
            .filter_map(normalize_text)
            .filter(|s| !s.is_empty())
            .map(|s| s.split(' ').map(str::to_owned).collect())
            .collect();
        Self { sentences }
    }

    pub fn from_text(text: &str) -> Self {
        Self::from_lines(text.lines())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_text(&std::fs::read_to_string(path)?))
    }

    pub fn from_sentences(sentences: Vec<Vec<String>>) -> Self {
        Self { sentences }
    }

    pub fn sentences(&self) -> &[Vec<String>] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// Word frequencies.
    pub fn counts(&self) -> HashMap<&str, u64> {
        let mut counts = HashMap::new();
        for w in self.words() {
            *counts.entry(w).or_insert(0) += 1;
        }
        counts
    }

    /// Words by descending frequency (ties alphabetical) with at least
    /// `min_count` occurrences, at most `cap` of them.
    pub fn vocabulary(&self, min_count: u64, cap: Option<usize>) -> Vec<String> {
        let mut words: Vec<(&str, u64)> = self.counts().into_iter().filter(|&(_, c)| c >= min_count).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        if let Some(cap) = cap {
            words.truncate(cap);
        }
        words.into_iter().map(|(w, _)| w.to_owned()).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for sentence in &self.sentences {
            s.push_str(&sentence.join(" "));
            s.push('\n');
        }
        s
    }

    /// Deterministic random split into (first, rest) with `fraction` of the
    /// sentences in the first part.
    pub fn split(&self, fraction: f64, seed: u64) -> (Corpus, Corpus) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let cut = ((self.len() as f64) * fraction).round() as usize;
        let pick = |ids: &[usize]| Corpus {
            sentences: ids.iter().map(|&i| self.sentences[i].clone()).collect(),
        };
        (pick(&idx[..cut]), pick(&idx[cut..]))
    }

    /// Up to `n` sentences drawn without replacement.
    pub fn sample(&self, n: usize, seed: u64) -> Corpus {
        if n >= self.len() {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(n);
        idx.sort_unstable();
        Corpus {
            sentences: idx.iter().map(|&i| self.sentences[i].clone()).collect(),
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            sentences: indices.iter().map(|&i| self.sentences[i].clone()).collect(),
        }
    }
}
