//! Text entry from surface taps.
//!
//! The pipeline has three stages. [`signal`] finds tap candidates in
//! accelerometer streams, [`classifier`] turns each candidate window into a
//! calibrated distribution over the fingers and palm of one hand, and
//! [`decoder`] fuses those distributions with character and word n-gram
//! priors from [`lm`] to produce ranked word suggestions. [`session`] wraps
//! the decoder in the interaction state machine (space, cycle, delete, OOV
//! entry) and [`eval`] hosts the offline simulation harness and text entry
//! metrics.

pub mod classifier;
pub mod decoder;
pub mod domain;
pub mod error;
pub mod eval;
pub mod lm;
pub mod session;
pub mod signal;

pub use domain::{FingerClass, Hand, KeyFingerMap, PhraseSet, TapObservation};
pub use error::{Error, Result};

/// Desk-scale English corpus bundled with the crate (one sentence per line).
pub const DESK_CORPUS: &str = include_str!("../data/desk_corpus.txt");

/// Fifty evaluation phrases whose words are all in the desk vocabulary.
pub const DESK_PHRASES: &str = include_str!("../data/phrases.txt");

/// Decoder over models trained on [`DESK_CORPUS`] with default settings and
/// the QWERTY finger map. Training takes a few seconds.
pub fn desk_decoder() -> Result<decoder::Decoder> {
    use std::sync::Arc;
    let corpus = lm::Corpus::from_text(DESK_CORPUS);
    let char_lm = lm::CharLm::train(&corpus, lm::CharLm::DEFAULT_ORDER)?;
    let word_lm = lm::WordLm::train(&corpus, &lm::WordLmConfig::default())?;
    decoder::Decoder::new(KeyFingerMap::qwerty(), Arc::new(char_lm), Arc::new(word_lm), decoder::DecoderConfig::default())
}
