//! Finger classification of tap windows.
//!
//! [`Classifier`] is a small convolutional network whose chosen layers are
//! mean-field Gaussian. It is trained on the variational objective with an
//! entropic open-set term, predicts by averaging an ensemble of stochastic
//! passes and rejects windows whose best class stays below a threshold.
//! [`ConfusionClassifier`] replaces it in decoder experiments with a known
//! confusion matrix, emitting either calibrated posteriors or one-hot
//! guesses.

pub mod confusion;
pub mod dataset;
pub mod layers;
pub mod metrics;
mod model;
pub mod network;
pub mod preprocess;

pub use confusion::{ConfusionClassifier, ConfusionMatrix, OutputMode};
pub use dataset::LabeledWindow;
pub use metrics::{metrics, ClassificationMetrics};
pub use model::{read_training_stats, Classifier, ClassifierConfig, EpochStats, Placement, Prediction, TrainingStats};
pub use network::LayerSpec;
pub use preprocess::{mirror, preprocess, ChannelStats};
