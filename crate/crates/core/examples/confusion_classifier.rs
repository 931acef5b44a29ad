//! Simulated classifiers with the same accuracy but different honesty:
//! the calibrated one reports the posterior of its confusion matrix, the
//! overconfident one puts all mass on its guess.

use taptype::classifier::{ConfusionClassifier, ConfusionMatrix, OutputMode};
use taptype::{FingerClass, Hand};

fn main() -> taptype::Result<()> {
    let matrix = ConfusionMatrix::finger_confusion(0.9)?;
    for mode in [OutputMode::Calibrated, OutputMode::Overconfident] {
        let mut c = ConfusionClassifier::new(matrix.clone(), mode, 5);
        println!("{mode:?}");
        for _ in 0..4 {
            let obs = c.observe(Hand::Left, FingerClass::Middle, 0);
            let probs: Vec<String> = FingerClass::ALL.iter().map(|f| format!("{}={:.2}", f.name(), obs.probs[f.index()])).collect();
            println!("  true middle -> {}", probs.join(" "));
        }
    }
    Ok(())
}
