//! Word decoding from finger observations.
//!
//! A hypothesis is a character prefix scored by the character model and
//! the finger probabilities of the taps consumed so far; each full-length
//! hypothesis that is a vocabulary word additionally receives its word
//! model probability given the previously committed words. The beam only
//! keeps prefixes of vocabulary words of the right length, since other
//! hypotheses could never be suggested. An unconstrained beam supplies the
//! best raw character sequence for spelling out-of-vocabulary words.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{FingerClass, Hand, KeyFingerMap, TapObservation};
use crate::error::{Error, Result};
use crate::lm::{CharLm, Vocab, WordLm};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub beam_width: usize,
    /// Fingers below this probability are not expanded.
    pub finger_prune: f64,
    pub max_suggestions: usize,
    /// Previously committed words given to the word model.
    pub context_words: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            beam_width: 64,
            finger_prune: 0.1,
            max_suggestions: 10,
            context_words: 3,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::Config("beam_width must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.finger_prune) {
            return Err(Error::Config("finger_prune must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub word: String,
    /// Character model plus finger terms plus word model term (natural log).
    pub logp: f64,
    pub char_logp: f64,
    pub finger_logp: f64,
    pub word_logp: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    /// Ranked vocabulary words, best first.
    pub suggestions: Vec<Suggestion>,
    /// Highest-scoring character sequence regardless of vocabulary.
    pub best_raw: Option<String>,
}

#[derive(Clone, Debug)]
struct Hypothesis {
    prefix: String,
    context: Vec<u32>,
    node: usize,
    char_logp: f64,
    finger_logp: f64,
    /// Running sum of per-tap increments, the beam's ranking score.
    logp: f64,
}

/// Highest score first, ties by the lexicographically smaller string.
fn rank(a_score: f64, a_text: &str, b_score: f64, b_text: &str) -> Ordering {
    b_score.partial_cmp(&a_score).unwrap_or(Ordering::Equal).then_with(|| a_text.cmp(b_text))
}

/// Prefix tree of the vocabulary. Each node records which numbers of
/// further characters lead to a word end, so prefixes that cannot become
/// a word of the observed length are dropped early.
#[derive(Clone, Debug, Default)]
struct Trie {
    children: Vec<BTreeMap<char, usize>>,
    word_end: Vec<bool>,
    /// Bit `k` set: some word ends exactly `k` characters below this node.
    remaining: Vec<u128>,
}

impl Trie {
    const ROOT: usize = 0;

    fn build<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut t = Trie {
            children: vec![BTreeMap::new()],
            word_end: vec![false],
            remaining: vec![0],
        };
        for w in words {
            let chars: Vec<char> = w.chars().collect();
            if chars.len() >= 128 {
                continue;
            }
            let mut node = Self::ROOT;
            for (i, &c) in chars.iter().enumerate() {
                t.remaining[node] |= 1 << (chars.len() - i);
                node = match t.children[node].get(&c) {
                    Some(&n) => n,
                    None => {
                        t.children.push(BTreeMap::new());
                        t.word_end.push(false);
                        t.remaining.push(0);
                        let n = t.children.len() - 1;
                        t.children[node].insert(c, n);
                        n
                    }
                };
            }
            t.remaining[node] |= 1;
            t.word_end[node] = true;
        }
        t
    }

    fn child(&self, node: usize, c: char) -> Option<usize> {
        self.children[node].get(&c).copied()
    }

    fn can_end_in(&self, node: usize, steps: usize) -> bool {
        steps < 128 && self.remaining[node] & (1 << steps) != 0
    }
}

/// The decoder with its models. Cheap to clone; models are shared.
#[derive(Clone, Debug)]
pub struct Decoder {
    map: KeyFingerMap,
    char_lm: Arc<CharLm>,
    word_lm: Arc<WordLm>,
    config: DecoderConfig,
    trie: Arc<Trie>,
}

impl Decoder {
    /// The vocabulary is every word-model word that the map can type.
    pub fn new(map: KeyFingerMap, char_lm: Arc<CharLm>, word_lm: Arc<WordLm>, config: DecoderConfig) -> Result<Self> {
        config.validate()?;
        let trie = Trie::build(word_lm.words().filter(|w| w.chars().all(|c| map.finger_for(c).is_some() && char_lm.char_id(c).is_some())));
        Ok(Self {
            map,
            char_lm,
            word_lm,
            config,
            trie: Arc::new(trie),
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn with_config(&self, config: DecoderConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, ..self.clone() })
    }

    pub fn map(&self) -> &KeyFingerMap {
        &self.map
    }

    pub fn char_lm(&self) -> &CharLm {
        &self.char_lm
    }

    pub fn word_lm(&self) -> &WordLm {
        &self.word_lm
    }

    /// Whether `word` can be suggested.
    pub fn in_vocabulary(&self, word: &str) -> bool {
        let mut node = Trie::ROOT;
        for c in word.chars() {
            match self.trie.child(node, c) {
                Some(n) => node = n,
                None => return false,
            }
        }
        self.trie.word_end[node]
    }

    /// Typing fingers expanded for `obs`: those at or above the pruning
    /// threshold, or else the single most probable one (lowest class index
    /// on ties).
    pub fn admitted_fingers(&self, obs: &TapObservation) -> Vec<FingerClass> {
        let kept: Vec<FingerClass> = FingerClass::TYPING.into_iter().filter(|&f| obs.prob(f) >= self.config.finger_prune).collect();
        if !kept.is_empty() {
            return kept;
        }
        let mut best = FingerClass::TYPING[0];
        for f in FingerClass::TYPING {
            if obs.prob(f) > obs.prob(best) {
                best = f;
            }
        }
        vec![best]
    }

    /// (character, ln p(finger | obs)) pairs to expand at one position.
    fn expansions(&self, obs: &TapObservation) -> Result<Vec<(char, f64)>> {
        if self.map.characters_of_hand(obs.hand).is_empty() {
            return Err(Error::EmptyHand(obs.hand));
        }
        let mut out = Vec::new();
        for f in self.admitted_fingers(obs) {
            let lf = obs.prob(f).ln();
            for &c in self.map.characters_for(obs.hand, f)? {
                out.push((c, lf));
            }
        }
        Ok(out)
    }

    fn context<'c, S: AsRef<str>>(&self, committed: &'c [S]) -> &'c [S] {
        &committed[committed.len().saturating_sub(self.config.context_words)..]
    }

    /// Ranked vocabulary suggestions for the taps of one word, given the
    /// words committed earlier in the phrase.
    pub fn decode<S: AsRef<str>>(&self, obs: &[TapObservation], committed: &[S]) -> Result<Decoded> {
        if obs.is_empty() {
            return Err(Error::Empty("observation sequence"));
        }
        let steps: Vec<Vec<(char, f64)>> = obs.iter().map(|o| self.expansions(o)).collect::<Result<_>>()?;
        let n = steps.len();

        let finals = self.beam(&steps, |node, c, depth| {
            let child = self.trie.child(node, c)?;
            self.trie.can_end_in(child, n - depth - 1).then_some(child)
        });
        let context = self.context(committed);
        let mut suggestions: Vec<Suggestion> = finals
            .into_iter()
            .filter(|h| self.trie.word_end[h.node])
            .map(|h| {
                let word_logp = self.word_lm.log_prob(context, &h.prefix);
                Suggestion {
                    logp: h.logp + word_logp,
                    word: h.prefix,
                    char_logp: h.char_logp,
                    finger_logp: h.finger_logp,
                    word_logp,
                }
            })
            .collect();
        suggestions.sort_by(|a, b| rank(a.logp, &a.word, b.logp, &b.word));
        suggestions.dedup_by(|a, b| a.word == b.word);
        suggestions.truncate(self.config.max_suggestions);

        let best_raw = self.beam(&steps, |_, _, _| Some(Trie::ROOT)).into_iter().next().map(|h| h.prefix);
        Ok(Decoded { suggestions, best_raw })
    }

    /// Beam search over `steps`; `advance(node, char, depth)` returns the
    /// next trie node or `None` to drop the extension. Returns the final
    /// beam, best first.
    fn beam(&self, steps: &[Vec<(char, f64)>], advance: impl Fn(usize, char, usize) -> Option<usize>) -> Vec<Hypothesis> {
        let mut beam = vec![Hypothesis {
            prefix: String::new(),
            context: vec![Vocab::BOS_ID],
            node: Trie::ROOT,
            char_logp: 0.0,
            finger_logp: 0.0,
            logp: 0.0,
        }];
        for (depth, step) in steps.iter().enumerate() {
            let mut next = Vec::with_capacity(beam.len() * step.len());
            for h in &beam {
                for &(c, lf) in step {
                    let Some(node) = advance(h.node, c, depth) else { continue };
                    let Some(id) = self.char_lm.char_id(c) else { continue };
                    let lc = self.char_lm.log_prob_ids(&h.context, id);
                    let mut prefix = h.prefix.clone();
                    prefix.push(c);
                    let mut context = h.context.clone();
                    context.push(id);
                    next.push(Hypothesis {
                        prefix,
                        context,
                        node,
                        char_logp: h.char_logp + lc,
                        finger_logp: h.finger_logp + lf,
                        logp: h.logp + (lc + lf),
                    });
                }
            }
            next.sort_by(|a, b| rank(a.logp, &a.prefix, b.logp, &b.prefix));
            next.truncate(self.config.beam_width);
            beam = next;
        }
        beam
    }

    /// Every character of the tapping hand ranked by
    /// ln p(char | word so far) + ln p(finger | obs), ties alphabetical.
    pub fn decode_single_char(&self, obs: &TapObservation, history: &str) -> Result<Vec<(char, f64)>> {
        let chars = self.map.characters_of_hand(obs.hand);
        if chars.is_empty() {
            return Err(Error::EmptyHand(obs.hand));
        }
        let context = self.char_lm.context_ids(history)?;
        let mut ranked: Vec<(char, f64)> = chars
            .into_iter()
            .filter_map(|c| {
                let (_, finger) = self.map.finger_for(c)?;
                let id = self.char_lm.char_id(c)?;
                Some((c, self.char_lm.log_prob_ids(&context, id) + obs.prob(finger).ln()))
            })
            .collect();
        ranked.sort_by(|a, b| rank(a.1, &a.0.to_string(), b.1, &b.0.to_string()));
        Ok(ranked)
    }

    /// One-hot observations that type `word` under the map.
    pub fn observations_for(&self, word: &str) -> Result<Vec<TapObservation>> {
        word.chars()
            .map(|c| {
                self.map
                    .finger_for(c)
                    .map(|(h, f)| TapObservation::one_hot(h, f))
                    .ok_or_else(|| Error::OutOfVocabulary(vec![word.to_owned()]))
            })
            .collect()
    }
}

/// Hands that type at least one character under `map`.
pub fn typing_hands(map: &KeyFingerMap) -> Vec<Hand> {
    Hand::ALL.into_iter().filter(|&h| !map.characters_of_hand(h).is_empty()).collect()
}
