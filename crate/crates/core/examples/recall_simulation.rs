//! Offline top-k recall over the bundled phrases for a calibrated and an
//! overconfident classifier of equal accuracy.

use taptype::classifier::{ConfusionClassifier, ConfusionMatrix, OutputMode};
use taptype::eval::{simulate_recall, SimulationConfig};
use taptype::{PhraseSet, DESK_PHRASES};

fn main() -> taptype::Result<()> {
    let decoder = taptype::desk_decoder()?;
    let phrases = PhraseSet::parse(DESK_PHRASES)?;
    let config = SimulationConfig::default();
    let matrix = ConfusionMatrix::finger_confusion(0.9)?;
    for mode in [OutputMode::Calibrated, OutputMode::Overconfident] {
        let mut source = ConfusionClassifier::new(matrix.clone(), mode, 0);
        let report = simulate_recall(&phrases, &decoder, &mut source, &config)?;
        let recall: Vec<String> = report.recall.iter().map(|(k, r)| format!("@{k} {r:.3}")).collect();
        println!("{mode:?}: {}", recall.join("  "));
        println!("  CER {:.4}, {:.1} WPM over {} words", report.mean_cer, report.mean_wpm, report.words);
    }
    Ok(())
}
