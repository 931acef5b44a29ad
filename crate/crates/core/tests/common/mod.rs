//! Models shared by the integration tests, trained once per test binary.
#![allow(dead_code)]

use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use taptype::decoder::Decoder;
use taptype::{FingerClass, Hand, TapObservation};

/// Character and word models on the bundled desk corpus.
pub fn desk_decoder() -> &'static Decoder {
    static D: OnceLock<Decoder> = OnceLock::new();
    D.get_or_init(|| taptype::desk_decoder().unwrap())
}

/// A random distribution over the six classes with extra mass on `finger`.
pub fn noisy_observation(rng: &mut ChaCha8Rng, hand: Hand, finger: FingerClass) -> TapObservation {
    let g = Gamma::new(rng.gen_range(0.3f64..2.0), 1.0).unwrap();
    let mut p = [0.0f64; 6];
    for v in &mut p {
        *v = g.sample(rng).max(1e-300);
    }
    p[finger.index()] += rng.gen_range(0.0..3.0);
    let s: f64 = p.iter().sum();
    TapObservation::new(hand, p.map(|v| v / s)).unwrap()
}
