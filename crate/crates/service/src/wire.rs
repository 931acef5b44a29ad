//! JSON messages of the `/session` WebSocket.

use serde::{Deserialize, Serialize};
use taptype::classifier::{ConfusionClassifier, ConfusionMatrix, OutputMode};
use taptype::session::{Feedback, Mode, Render, Session};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    /// The key the user meant to press.
    TapKey { key: char },
    Space,
    Cycle,
    Delete,
    AcceptChar,
    SubmitPhrase,
    Config { noise: NoiseConfig },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    #[default]
    Calibrated,
    Overconfident,
}

/// Simulated classifier quality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Mean top-1 accuracy; 1 is a perfect classifier.
    pub accuracy: f64,
    pub mode: NoiseMode,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            accuracy: 1.0,
            mode: NoiseMode::Calibrated,
        }
    }
}

impl NoiseConfig {
    /// Neighbouring-finger confusion at the configured accuracy.
    pub fn classifier(&self, seed: u64) -> taptype::Result<ConfusionClassifier> {
        let matrix = ConfusionMatrix::finger_confusion(self.accuracy)?;
        let mode = match self.mode {
            NoiseMode::Calibrated => OutputMode::Calibrated,
            NoiseMode::Overconfident => OutputMode::Overconfident,
        };
        Ok(ConfusionClassifier::new(matrix, mode, seed))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireSuggestion {
    pub word: String,
    /// Natural-log score; characters in OOV mode.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderMessage {
    pub committed: String,
    /// One asterisk per pending tap.
    pub pending: String,
    pub suggestions: Vec<WireSuggestion>,
    pub cursor: usize,
    /// "click", "delete" or "none".
    pub feedback: String,
    pub mode: Mode,
    /// Characters accepted so far in OOV mode.
    pub oov_prefix: String,
    /// The phrase finished by this message, if any.
    pub submitted: Option<String>,
}

impl RenderMessage {
    pub fn from_render(render: &Render, session: &Session) -> Self {
        let feedback = match render.feedback {
            Feedback::Click => "click",
            Feedback::Delete => "delete",
            Feedback::None => "none",
        };
        Self {
            committed: render.committed.clone(),
            pending: render.pending_mask.clone(),
            suggestions: session
                .state()
                .suggestions
                .iter()
                .map(|e| WireSuggestion { word: e.text.clone(), score: e.logp })
                .collect(),
            cursor: render.cursor,
            feedback: feedback.to_owned(),
            mode: render.mode,
            oov_prefix: render.oov_prefix.clone(),
            submitted: render.submitted.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Render(RenderMessage),
    Error { message: String },
}

impl ServerMessage {
    pub fn error(message: impl Into<String>) -> Self {
        Self::Error { message: message.into() }
    }
}
