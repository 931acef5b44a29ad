use std::collections::HashMap;

use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// Token table shared by every order of a model. `<s>` is always id 0 and
/// is only ever used as context.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    unk: Option<u32>,
}

impl Vocab {
    pub const BOS_ID: u32 = 0;
    pub const EOS_ID: u32 = 1;

    /// Creates a vocabulary holding `<s>`, `</s>`, optionally `<unk>`, then `words`
    /// in the given order. Duplicates and specials among `words` are skipped.
    pub fn new<I, S>(words: I, with_unk: bool) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self {
            tokens: Vec::new(),
            ids: HashMap::new(),
            unk: None,
        };
        vocab.push(BOS.to_owned());
        vocab.push(EOS.to_owned());
        if with_unk {
            vocab.unk = Some(vocab.push(UNK.to_owned()));
        }
        for w in words {
            vocab.push(w.into());
        }
        vocab
    }

    /// Builds a vocabulary from tokens in file order, as read from an ARPA
    /// unigram section.
    pub(crate) fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut words: Vec<String> = Vec::with_capacity(tokens.len());
        let mut has_bos = false;
        let mut has_eos = false;
        let mut has_unk = false;
        for t in tokens {
            match t.as_str() {
                BOS => has_bos = true,
                EOS => has_eos = true,
                UNK => has_unk = true,
                _ => words.push(t),
            }
        }
        if !has_bos || !has_eos {
            return Err(Error::Format("unigram section must contain <s> and </s>".into()));
        }
        Ok(Self::new(words, has_unk))
    }

    fn push(&mut self, token: String) -> u32 {
        if let Some(&id) = self.ids.get(&token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.ids.insert(token.clone(), id);
        self.tokens.push(token);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    /// Id of `token`, falling back to `<unk>` when the vocabulary has one.
    pub fn id_or_unk(&self, token: &str) -> Option<u32> {
        self.id(token).or(self.unk)
    }

    pub fn unk(&self) -> Option<u32> {
        self.unk
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Ids that can be predicted, i.e. everything except `<s>`.
    pub fn predictable(&self) -> impl Iterator<Item = u32> {
        1..self.tokens.len() as u32
    }
}
