//! A classifier stand-in that draws predictions from a fixed confusion
//! matrix, for decoder experiments with controlled accuracy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{FingerClass, Hand, TapObservation};
use crate::error::{Error, Result};

const N: usize = FingerClass::COUNT;

/// Row-stochastic matrix: entry `[t][p]` is P(predicted p | true t).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix([[f64; N]; N]);

impl ConfusionMatrix {
    pub fn new(rows: [[f64; N]; N]) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("confusion row {i} is not a probability distribution")));
            }
        }
        Ok(Self(rows))
    }

    pub fn identity() -> Self {
        Self(std::array::from_fn(|i| std::array::from_fn(|j| (i == j) as u8 as f64)))
    }

    /// Every class is right with probability `accuracy`; errors spread
    /// evenly over the other five classes.
    pub fn uniform_errors(accuracy: f64) -> Result<Self> {
        check_accuracy(accuracy)?;
        let off = (1.0 - accuracy) / (N - 1) as f64;
        Self::new(std::array::from_fn(|i| std::array::from_fn(|j| if i == j { accuracy } else { off })))
    }

    /// Errors between neighbouring fingers only, with mean per-class
    /// accuracy `accuracy`. With `e = 1 - accuracy`: index and pinky keep
    /// `1 - e/2` and leak to middle and ring; middle and ring keep
    /// `1 - 3e/2` and confuse each other; thumb and palm keep `1 - e` and
    /// confuse each other. Requires `e ≤ 2/3`.
    pub fn finger_confusion(accuracy: f64) -> Result<Self> {
        check_accuracy(accuracy)?;
        let e = 1.0 - accuracy;
        if 1.5 * e > 1.0 {
            return Err(Error::Config(format!("finger confusion needs accuracy of at least 1/3, got {accuracy}")));
        }
        use FingerClass::*;
        let mut m = [[0.0; N]; N];
        let mut set = |t: FingerClass, p: FingerClass, v: f64| m[t.index()][p.index()] += v;
        for (t, to, leak) in [(Index, Middle, e / 2.0), (Middle, Ring, 1.5 * e), (Ring, Middle, 1.5 * e), (Pinky, Ring, e / 2.0), (Thumb, Palm, e), (Palm, Thumb, e)] {
            set(t, t, 1.0 - leak);
            set(t, to, leak);
        }
        Self::new(m)
    }

    pub fn rows(&self) -> &[[f64; N]; N] {
        &self.0
    }

    /// Mean of the diagonal.
    pub fn mean_accuracy(&self) -> f64 {
        (0..N).map(|i| self.0[i][i]).sum::<f64>() / N as f64
    }

    /// P(true t | predicted p) under a uniform class prior, indexed
    /// `[p][t]`. Columns never predicted give a uniform row.
    pub fn posterior(&self) -> [[f64; N]; N] {
        std::array::from_fn(|p| {
            let col: f64 = (0..N).map(|t| self.0[t][p]).sum();
            std::array::from_fn(|t| if col > 0.0 { self.0[t][p] / col } else { 1.0 / N as f64 })
        })
    }
}

fn check_accuracy(accuracy: f64) -> Result<()> {
    if (0.0..=1.0).contains(&accuracy) {
        Ok(())
    } else {
        Err(Error::Config(format!("accuracy {accuracy} outside [0, 1]")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// The posterior over true classes given the sampled prediction.
    Calibrated,
    /// All mass on the sampled prediction.
    Overconfident,
}

#[derive(Clone, Debug)]
pub struct ConfusionClassifier {
    matrix: ConfusionMatrix,
    mode: OutputMode,
    posterior: [[f64; N]; N],
    rng: ChaCha8Rng,
}

impl ConfusionClassifier {
    pub fn new(matrix: ConfusionMatrix, mode: OutputMode, seed: u64) -> Self {
        let posterior = matrix.posterior();
        Self {
            matrix,
            mode,
            posterior,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Restarts the sampling stream.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn matrix(&self) -> &ConfusionMatrix {
        &self.matrix
    }

    pub fn mode(&self) -> OutputMode {
        self.mode
    }

    /// Draws a predicted class for a tap by `truth`.
    pub fn sample(&mut self, truth: FingerClass) -> FingerClass {
        let row = &self.matrix.0[truth.index()];
        let mut u: f64 = self.rng.gen();
        for (p, &v) in row.iter().enumerate() {
            if u < v {
                return FingerClass::from_index(p).expect("class index");
            }
            u -= v;
        }
        // rounding left a sliver of mass past the last entry
        let last = (0..N).rev().find(|&p| row[p] > 0.0).unwrap_or(truth.index());
        FingerClass::from_index(last).expect("class index")
    }

    /// The probability vector reported for a sampled prediction.
    pub fn output(&self, predicted: FingerClass) -> [f64; N] {
        match self.mode {
            OutputMode::Calibrated => self.posterior[predicted.index()],
            OutputMode::Overconfident => std::array::from_fn(|i| (i == predicted.index()) as u8 as f64),
        }
    }

    pub fn observe(&mut self, hand: Hand, truth: FingerClass, timestamp: u64) -> TapObservation {
        let predicted = self.sample(truth);
        TapObservation {
            hand,
            probs: self.output(predicted),
            timestamp,
        }
    }
}
