//! Train a deterministic and a Bayesian classifier on the same synthetic
//! participants and compare them on a held-out one, including the recall
//! they give the decoder.

use taptype::classifier::dataset::synthesize_participants;
use taptype::classifier::{ClassifierConfig, Placement};
use taptype::eval::{compare_classifiers, SimulationConfig};
use taptype::signal::synth::GeneratorSpec;
use taptype::signal::DetectorConfig;
use taptype::{PhraseSet, DESK_PHRASES};

fn main() -> taptype::Result<()> {
    let decoder = taptype::desk_decoder()?;
    let phrases = PhraseSet::new(PhraseSet::parse(DESK_PHRASES)?.phrases()[..10].to_vec())?;
    let mut people = synthesize_participants(&GeneratorSpec::default(), &DetectorConfig::default(), 4, 20, 0.1, 8)?;
    let test = people.pop().expect("four participants");
    let train = people.concat();
    let variants: Vec<(String, ClassifierConfig)> = [Placement::None, Placement::FirstAndLast]
        .into_iter()
        .map(|p| {
            let mut config = ClassifierConfig::with_placement(p);
            config.epochs = 5;
            config.kl_weight = Some(1.0 / train.len() as f64);
            (p.name().to_owned(), config)
        })
        .collect();
    let rows = compare_classifiers(&variants, &train, &test, &phrases, &decoder, &SimulationConfig::default())?;
    println!("{:<16} {:>6} {:>7} {:>7} {:>8} {:>9}", "variant", "F1", "ECE", "NLL", "OOD rej", "recall@10");
    for r in &rows {
        let r10 = r.recall.iter().find(|(k, _)| *k == 10).map_or(f64::NAN, |(_, v)| *v);
        println!(
            "{:<16} {:>6.3} {:>7.4} {:>7.4} {:>8.3} {:>9.3}",
            r.name, r.metrics.macro_f1, r.metrics.ece, r.metrics.nll, r.ood_rejection, r10
        );
    }
    Ok(())
}
