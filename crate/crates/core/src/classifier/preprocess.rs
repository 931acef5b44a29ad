//! Input normalization. Right-hand windows are mirrored onto the left
//! hand (x axes negated) so one network serves both hands, then every
//! channel is standardized with statistics from the training set.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::domain::Hand;
use crate::signal::synth::mirror_frame;
use crate::signal::{Frame, CHANNELS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

impl Default for ChannelStats {
    fn default() -> Self {
        Self {
            mean: [0.0; CHANNELS],
            std: [1.0; CHANNELS],
        }
    }
}

impl ChannelStats {
    /// Per-channel mean and standard deviation over every sample of the
    /// mirrored windows. Channels with zero spread get a divisor of 1 and
    /// are reported in the second return value.
    pub fn fit<'a>(windows: impl IntoIterator<Item = (&'a [Frame], Hand)>) -> (Self, Vec<usize>) {
        let mut sum = [0.0; CHANNELS];
        let mut sum_sq = [0.0; CHANNELS];
        let mut n = 0usize;
        for (window, hand) in windows {
            for frame in mirror(window, hand) {
                for c in 0..CHANNELS {
                    sum[c] += frame[c];
                    sum_sq[c] += frame[c] * frame[c];
                }
                n += 1;
            }
        }
        let n = n.max(1) as f64;
        let mean = sum.map(|s| s / n);
        let mut std = [1.0; CHANNELS];
        let mut degenerate = Vec::new();
        for c in 0..CHANNELS {
            let var = (sum_sq[c] / n - mean[c] * mean[c]).max(0.0);
            if var > 0.0 {
                std[c] = var.sqrt();
            } else {
                warn!("channel {c} has zero variance in the training windows; leaving it unscaled");
                degenerate.push(c);
            }
        }
        (Self { mean, std }, degenerate)
    }
}

/// The window as seen from the left hand.
pub fn mirror(window: &[Frame], hand: Hand) -> Vec<Frame> {
    window
        .iter()
        .map(|f| {
            let mut f = *f;
            if hand == Hand::Right {
                mirror_frame(&mut f);
            }
            f
        })
        .collect()
}

/// Mirrors and standardizes a window.
pub fn preprocess(window: &[Frame], hand: Hand, stats: &ChannelStats) -> Vec<Frame> {
    mirror(window, hand)
        .into_iter()
        .map(|f| std::array::from_fn(|c| (f[c] - stats.mean[c]) / stats.std[c]))
        .collect()
}

/// Channel-major copy of a window (`channel · len + t`).
pub fn channel_major(window: &[Frame]) -> Vec<f64> {
    let len = window.len();
    let mut out = vec![0.0; CHANNELS * len];
    for (t, f) in window.iter().enumerate() {
        for c in 0..CHANNELS {
            out[c * len + t] = f[c];
        }
    }
    out
}
