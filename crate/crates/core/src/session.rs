//! The interaction state machine: finger taps accumulate into a pending
//! word, the right thumb commits the selected suggestion, the left thumb
//! cycles through suggestions, the left palm deletes and the right palm
//! accepts single characters for words outside the vocabulary.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::decoder::Decoder;
use crate::domain::{FingerClass, Hand, TapObservation};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SessionEvent {
    FingerTap { obs: TapObservation },
    /// Right thumb.
    Space,
    /// Left thumb.
    Cycle,
    /// Left palm.
    DeleteWord,
    /// Right palm.
    AcceptChar,
    /// A window the classifier rejected.
    Rejected,
}

/// Routes a classified tap: thumbs and palms are commands, typing fingers
/// carry their full distribution to the decoder, `None` is a rejection.
pub fn classify_event(tap: Option<&TapObservation>) -> SessionEvent {
    let Some(obs) = tap else { return SessionEvent::Rejected };
    match (obs.argmax(), obs.hand) {
        (FingerClass::Thumb, Hand::Right) => SessionEvent::Space,
        (FingerClass::Thumb, Hand::Left) => SessionEvent::Cycle,
        (FingerClass::Palm, Hand::Left) => SessionEvent::DeleteWord,
        (FingerClass::Palm, Hand::Right) => SessionEvent::AcceptChar,
        _ => SessionEvent::FingerTap { obs: obs.clone() },
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Normal,
    /// Spelling a word character by character.
    Oov,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Click,
    Delete,
    #[default]
    None,
}

/// A ranked entry: a word in normal mode, a single character in OOV mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub text: String,
    pub logp: f64,
}

/// What a committed word needs for re-cycling after it is deleted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub word: String,
    pub taps: Vec<TapObservation>,
    pub suggestions: Vec<Entry>,
    /// Index of the committed entry in `suggestions`.
    pub index: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub committed: Vec<String>,
    /// One record per committed word.
    pub history: Vec<CommitRecord>,
    pub pending: Vec<TapObservation>,
    pub suggestions: Vec<Entry>,
    pub best_raw: Option<String>,
    pub cursor: usize,
    pub mode: Mode,
    pub oov_prefix: String,
    /// The most recently deleted word, restorable by a cycle.
    pub last_committed_suggestions: Option<CommitRecord>,
    /// The previous event committed a word, so a space now submits.
    pub just_committed: bool,
    /// Phrases finished with a double space.
    pub submitted: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Render {
    pub committed: String,
    /// One asterisk per pending tap.
    pub pending_mask: String,
    /// The entry that replaces the asterisks once decoding is done.
    pub current: Option<String>,
    pub oov_prefix: String,
    pub suggestions: Vec<String>,
    pub cursor: usize,
    pub mode: Mode,
    pub feedback: Feedback,
    /// Space was pressed with nothing to commit or submit.
    pub nothing_to_commit: bool,
    /// Set when this event finished a phrase.
    pub submitted: Option<String>,
}

impl SessionState {
    pub fn committed_text(&self) -> String {
        self.committed.join(" ")
    }

    fn render(&self, feedback: Feedback, nothing_to_commit: bool, submitted: Option<String>) -> Render {
        Render {
            committed: self.committed_text(),
            pending_mask: "*".repeat(self.pending.len()),
            current: self.suggestions.get(self.cursor).map(|e| e.text.clone()),
            oov_prefix: self.oov_prefix.clone(),
            suggestions: self.suggestions.iter().map(|e| e.text.clone()).collect(),
            cursor: self.cursor,
            mode: self.mode,
            feedback,
            nothing_to_commit,
            submitted,
        }
    }

    fn clear_word(&mut self) {
        self.pending.clear();
        self.suggestions.clear();
        self.best_raw = None;
        self.cursor = 0;
    }

    /// Decodes the pending taps into suggestions.
    fn redecode(&mut self, decoder: &Decoder) -> Result<()> {
        self.cursor = 0;
        match self.mode {
            Mode::Normal => {
                let decoded = decoder.decode(&self.pending, &self.committed)?;
                self.suggestions = decoded.suggestions.into_iter().map(|s| Entry { text: s.word, logp: s.logp }).collect();
                self.best_raw = decoded.best_raw;
            }
            Mode::Oov => {
                let last = self.pending.last().ok_or(Error::Empty("pending taps"))?;
                let history = self.oov_prefix.clone() + &self.greedy_chars(decoder, &self.pending[..self.pending.len() - 1], &self.oov_prefix)?;
                self.suggestions = decoder
                    .decode_single_char(last, &history)?
                    .into_iter()
                    .take(decoder.config().max_suggestions)
                    .map(|(c, logp)| Entry { text: c.to_string(), logp })
                    .collect();
                self.best_raw = None;
            }
        }
        Ok(())
    }

    /// Best character for each tap in turn, continuing `history`.
    fn greedy_chars(&self, decoder: &Decoder, taps: &[TapObservation], history: &str) -> Result<String> {
        let mut out = String::new();
        for t in taps {
            let ranked = decoder.decode_single_char(t, &(history.to_owned() + &out))?;
            out.push(ranked[0].0);
        }
        Ok(out)
    }

    /// Characters accepted for the pending taps: the selected entry for
    /// the last tap in OOV mode, the best character otherwise.
    fn accepted_chars(&self, decoder: &Decoder) -> Result<String> {
        match self.mode {
            Mode::Oov => {
                let head = self.greedy_chars(decoder, &self.pending[..self.pending.len() - 1], &self.oov_prefix)?;
                let selected = self.suggestions.get(self.cursor).map(|e| e.text.clone()).unwrap_or_default();
                Ok(head + &selected)
            }
            Mode::Normal => self.greedy_chars(decoder, &self.pending, &self.oov_prefix),
        }
    }

    fn commit(&mut self, record: CommitRecord) {
        self.committed.push(record.word.clone());
        self.history.push(record);
        self.clear_word();
        self.just_committed = true;
    }
}

/// Applies one event and returns the new state with what to show.
pub fn apply(state: &SessionState, event: &SessionEvent, decoder: &Decoder) -> Result<(SessionState, Render)> {
    let mut s = state.clone();
    let was_committed = std::mem::take(&mut s.just_committed);
    let mut nothing_to_commit = false;
    let mut submitted = None;
    let feedback = match event {
        SessionEvent::Rejected => {
            s.just_committed = was_committed;
            return Ok((s.clone(), s.render(Feedback::None, false, None)));
        }
        SessionEvent::FingerTap { obs } => {
            obs.check()?;
            s.last_committed_suggestions = None;
            s.pending.push(obs.clone());
            s.redecode(decoder)?;
            Feedback::Click
        }
        SessionEvent::Space => {
            s.last_committed_suggestions = None;
            if !s.pending.is_empty() {
                match s.mode {
                    Mode::Normal => match s.suggestions.get(s.cursor) {
                        Some(entry) => {
                            let record = CommitRecord {
                                word: entry.text.clone(),
                                taps: s.pending.clone(),
                                suggestions: s.suggestions.clone(),
                                index: s.cursor,
                            };
                            s.commit(record);
                        }
                        None => match s.best_raw.clone() {
                            Some(word) => s.commit(CommitRecord {
                                word,
                                taps: s.pending.clone(),
                                suggestions: Vec::new(),
                                index: 0,
                            }),
                            None => nothing_to_commit = true,
                        },
                    },
                    Mode::Oov => {
                        let word = s.oov_prefix.clone() + &s.accepted_chars(decoder)?;
                        s.oov_prefix.clear();
                        s.mode = Mode::Normal;
                        s.commit(CommitRecord { word, taps: Vec::new(), suggestions: Vec::new(), index: 0 });
                    }
                }
                Feedback::Click
            } else if s.mode == Mode::Oov && !s.oov_prefix.is_empty() {
                let word = std::mem::take(&mut s.oov_prefix);
                s.mode = Mode::Normal;
                s.commit(CommitRecord { word, taps: Vec::new(), suggestions: Vec::new(), index: 0 });
                Feedback::Click
            } else if was_committed && !s.committed.is_empty() {
                let phrase = s.committed_text();
                s.submitted.push(phrase.clone());
                submitted = Some(phrase);
                s.committed.clear();
                s.history.clear();
                Feedback::Click
            } else {
                nothing_to_commit = true;
                Feedback::None
            }
        }
        SessionEvent::Cycle => {
            if s.pending.is_empty() && s.mode == Mode::Normal {
                if let Some(record) = s.last_committed_suggestions.take() {
                    s.cursor = (record.index + 1) % record.suggestions.len().max(1);
                    s.pending = record.taps;
                    s.suggestions = record.suggestions;
                    s.best_raw = None;
                    Feedback::Click
                } else {
                    Feedback::None
                }
            } else if s.suggestions.is_empty() {
                Feedback::None
            } else {
                s.cursor = (s.cursor + 1) % s.suggestions.len();
                Feedback::Click
            }
        }
        SessionEvent::DeleteWord => {
            if !s.pending.is_empty() {
                s.clear_word();
                Feedback::Delete
            } else if s.mode == Mode::Oov {
                s.oov_prefix.clear();
                s.mode = Mode::Normal;
                Feedback::Delete
            } else if let Some(word) = s.committed.pop() {
                let record = s.history.pop().unwrap_or(CommitRecord {
                    word,
                    taps: Vec::new(),
                    suggestions: Vec::new(),
                    index: 0,
                });
                // words spelled in OOV mode have no suggestions to restore
                s.last_committed_suggestions = (!record.suggestions.is_empty()).then_some(record);
                Feedback::Delete
            } else {
                Feedback::None
            }
        }
        SessionEvent::AcceptChar => {
            s.last_committed_suggestions = None;
            if s.pending.is_empty() {
                Feedback::None
            } else {
                let chars = s.accepted_chars(decoder)?;
                s.oov_prefix.push_str(&chars);
                s.mode = Mode::Oov;
                s.clear_word();
                Feedback::Click
            }
        }
    };
    let render = s.render(feedback, nothing_to_commit, submitted);
    Ok((s, render))
}

/// A session bound to a decoder.
#[derive(Clone, Debug)]
pub struct Session {
    decoder: Decoder,
    state: SessionState,
}

impl Session {
    pub fn new(decoder: Decoder) -> Self {
        Self {
            decoder,
            state: SessionState::default(),
        }
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    /// Applies `event`; on error the state is left unchanged.
    pub fn handle(&mut self, event: &SessionEvent) -> Result<Render> {
        let (state, render) = apply(&self.state, event, &self.decoder)?;
        self.state = state;
        Ok(render)
    }

    pub fn render(&self) -> Render {
        self.state.render(Feedback::None, false, None)
    }

    pub fn reset(&mut self) {
        self.state = SessionState::default();
    }
}

/// Applies `events` to a fresh state and returns it with every render.
pub fn replay(decoder: &Decoder, events: &[SessionEvent]) -> Result<(SessionState, Vec<Render>)> {
    let mut session = Session::new(decoder.clone());
    let renders = events.iter().map(|e| session.handle(e)).collect::<Result<_>>()?;
    Ok((session.state, renders))
}

/// Writes one JSON event per line.
pub fn write_event_log(events: &[SessionEvent], mut out: impl Write) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_event_log(input: impl BufRead) -> Result<Vec<SessionEvent>> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?);
    }
    Ok(events)
}

/// Events that type `word` with one-hot taps.
pub fn taps_for(decoder: &Decoder, word: &str) -> Result<Vec<SessionEvent>> {
    Ok(decoder.observations_for(word)?.into_iter().map(|obs| SessionEvent::FingerTap { obs }).collect())
}
