//! Train a small finger classifier on synthetic participants and score it
//! on one held-out participant.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use taptype::classifier::dataset::synthesize_participants;
use taptype::classifier::{metrics, Classifier, ClassifierConfig, Placement};
use taptype::signal::synth::GeneratorSpec;
use taptype::signal::DetectorConfig;

fn main() -> taptype::Result<()> {
    let mut people = synthesize_participants(&GeneratorSpec::default(), &DetectorConfig::default(), 4, 30, 0.1, 3)?;
    let test = people.pop().expect("four participants");
    let train = people.concat();

    let mut config = ClassifierConfig::with_placement(Placement::None);
    config.epochs = 10;
    let (model, stats) = Classifier::train(&train, config, 0)?;
    for e in &stats.epochs {
        println!("epoch {:>2}: loss {:.4}, train accuracy {:.3}", e.epoch, e.total, e.train_accuracy);
    }

    let scored: Vec<_> = test.iter().filter(|w| w.label.is_some()).collect();
    let inputs: Vec<_> = scored.iter().map(|w| (w.window.as_slice(), w.hand)).collect();
    let truth: Vec<_> = scored.iter().map(|w| w.label.unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let probs: Vec<[f64; 6]> = model.predict_many(&inputs, 1, &mut rng)?.into_iter().map(|p| p.probs).collect();
    let m = metrics(&probs, &truth)?;
    println!("held-out participant: accuracy {:.3}, macro F1 {:.3}, ECE {:.4}, NLL {:.4}", m.accuracy, m.macro_f1, m.ece, m.nll);

    let path = std::env::temp_dir().join("taptype-example-classifier.ttck");
    model.save(&path)?;
    println!("checkpoint written to {}", path.display());
    Ok(())
}
